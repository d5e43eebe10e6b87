# Network scenarios: AP/device placement, traffic and radio constants
# (pure values, no optimization logic)

from __future__ import annotations
from dataclasses import dataclass, field, replace
import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

logger = logging.getLogger(__name__)

# Path constants
_DATA_DIR = Path(__file__).parents[2]
JSON_DIR = _DATA_DIR / "data"

# Reference network defaults
DEFAULT_P_MAX_DBM = 23.0
DEFAULT_BANDWIDTH_HZ = 10e6
DEFAULT_PACKET_BITS = 0.5e6
DEFAULT_NOISE_PSD_DBM_HZ = -174.0
DEFAULT_SHADOWING_LOS_DB = 4.0
DEFAULT_SHADOWING_NLOS_DB = 10.0

# Link state selection
LOS_MODES = ("random", "los", "nlos")
DEFAULT_LOS_SCALE_M = 200.0

# Independent random streams derived from the scenario seed
PLACEMENT_STREAM = 0
CHANNEL_STREAM = 1

# Network sizes with constant AP density (10 APs per 420 m square)
PRESETS: dict[str, dict[str, Any]] = {
    "small": {"n_aps": 10, "n_devices": 25, "area_side_m": 420.0},
    "medium": {"n_aps": 100, "n_devices": 250, "area_side_m": 1330.0},
    "large": {"n_aps": 1000, "n_devices": 2500, "area_side_m": 4200.0},
}

# JSON keys of ScenarioParams (JSON name -> attribute name)
_PARAM_KEYS = {
    "n_aps": "n_aps",
    "n_devices": "n_devices",
    "area_side_m": "area_side_m",
    "lambda": "arrival_rate",
    "mean_packet_bits": "mean_packet_bits",
    "bandwidth_hz": "bandwidth_hz",
    "p_max_dbm": "p_max_dbm",
    "noise_psd_dbm_hz": "noise_psd_dbm_hz",
    "snr_threshold": "snr_threshold",
    "neighborhood_cap": "neighborhood_cap",
    "seed": "seed",
}
# Optional keys, defaulted when absent
_OPTIONAL_PARAM_KEYS = {
    "los_mode": "los_mode",
    "los_scale_m": "los_scale_m",
    "shadowing_los_db": "shadowing_los_db",
    "shadowing_nlos_db": "shadowing_nlos_db",
}


class ScenarioParseError(ValueError):
    """Malformed scenario file; `field` names the offending key."""

    def __init__(self, field_name: str, reason: str) -> None:
        super().__init__(f"Invalid scenario field {field_name!r}: {reason}")
        self.field = field_name


def dbm_to_watts(dbm: float) -> float:
    """Convert dBm (or dBm/Hz) to W (or W/Hz)."""
    return 10.0 ** ((dbm - 30.0) / 10.0)


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Generator for one named random stream of a seed. Streams never overlap."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


@dataclass(frozen=True)
class ScenarioParams:
    """Everything needed to generate a scenario, reference values by default."""

    n_aps: int = 100
    n_devices: int = 250
    area_side_m: float = 1330.0
    arrival_rate: float = 10.0
    mean_packet_bits: float = DEFAULT_PACKET_BITS
    bandwidth_hz: float = DEFAULT_BANDWIDTH_HZ
    p_max_dbm: float = DEFAULT_P_MAX_DBM
    noise_psd_dbm_hz: float = DEFAULT_NOISE_PSD_DBM_HZ
    snr_threshold: float = 1.0
    neighborhood_cap: int = 20
    seed: int = 0
    los_mode: str = "random"
    los_scale_m: float = DEFAULT_LOS_SCALE_M
    shadowing_los_db: float = DEFAULT_SHADOWING_LOS_DB
    shadowing_nlos_db: float = DEFAULT_SHADOWING_NLOS_DB

    def __post_init__(self) -> None:
        """Reject non-positive dimensions, counts and radio constants."""
        for name in ("n_aps", "n_devices", "neighborhood_cap"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ValueError(f"{name} must be an integer, got {value!r}")
            if value < 1:
                raise ValueError(f"{name} must be at least 1, got {value}")
        for name in (
            "area_side_m",
            "arrival_rate",
            "mean_packet_bits",
            "bandwidth_hz",
            "snr_threshold",
            "los_scale_m",
        ):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        for name in ("p_max_dbm", "noise_psd_dbm_hz"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.shadowing_los_db < 0 or self.shadowing_nlos_db < 0:
            raise ValueError("Shadowing standard deviations must be non-negative.")
        if self.los_mode not in LOS_MODES:
            raise ValueError(f"los_mode must be one of {LOS_MODES}, got {self.los_mode!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def p_max(self) -> float:
        """Peak PSD in W/Hz: the AP power spread flat over the band."""
        return dbm_to_watts(self.p_max_dbm) / self.bandwidth_hz

    @property
    def noise_psd(self) -> float:
        """Thermal noise PSD n_0 in W/Hz."""
        return dbm_to_watts(self.noise_psd_dbm_hz)

    @classmethod
    def preset(cls, name: str, **overrides: Any) -> ScenarioParams:
        """Named network size ("small", "medium", "large")."""
        if name not in PRESETS:
            raise ValueError(f"Unknown preset {name!r}, choose from {sorted(PRESETS)}")
        return cls(**{**PRESETS[name], **overrides})

    def as_dict(self) -> dict[str, Any]:
        """Convert to a dictionary with the scenario file's key names."""
        keys = {**_PARAM_KEYS, **_OPTIONAL_PARAM_KEYS}
        return {key: getattr(self, attr) for key, attr in keys.items()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ScenarioParams:
        """Create from a scenario file's params block, naming missing keys."""
        if not isinstance(data, dict):
            raise ScenarioParseError("params", "must be an object")
        kwargs: dict[str, Any] = {}
        for key, attr in _PARAM_KEYS.items():
            if key not in data:
                raise ScenarioParseError(key, "missing")
            kwargs[attr] = data[key]
        for key, attr in _OPTIONAL_PARAM_KEYS.items():
            if key in data:
                kwargs[attr] = data[key]
        for key in ("n_aps", "n_devices", "neighborhood_cap", "seed"):
            value = kwargs[_PARAM_KEYS[key]]
            if isinstance(value, bool) or not isinstance(value, int):
                raise ScenarioParseError(key, f"expected an integer, got {value!r}")
        for key, attr in {**_PARAM_KEYS, **_OPTIONAL_PARAM_KEYS}.items():
            if attr in kwargs and attr != "los_mode" and not isinstance(
                kwargs[attr], (int, float)
            ):
                raise ScenarioParseError(key, f"expected a number, got {kwargs[attr]!r}")
        try:
            return cls(**kwargs)
        except ValueError as e:
            attr_name = str(e).split(" ", 1)[0]
            key = next((k for k, a in _PARAM_KEYS.items() if a == attr_name), "params")
            raise ScenarioParseError(key, str(e)) from e


@dataclass(frozen=True, eq=False)
class NetworkScenario:
    """Placed APs and devices with their traffic; input to every later stage."""

    params: ScenarioParams
    ap_positions: np.ndarray
    device_positions: np.ndarray
    arrival_rates: np.ndarray = field(default=None)  # packets/s per device

    def __post_init__(self) -> None:
        """Freeze arrays, fill homogeneous traffic, check shapes and bounds."""
        ap = np.array(self.ap_positions, dtype=float).reshape(-1, 2)
        dev = np.array(self.device_positions, dtype=float).reshape(-1, 2)
        if self.arrival_rates is None:
            rates = np.full(len(dev), float(self.params.arrival_rate))
        else:
            rates = np.array(self.arrival_rates, dtype=float).reshape(-1)
        if len(ap) != self.params.n_aps:
            raise ValueError(f"Expected {self.params.n_aps} AP positions, got {len(ap)}")
        if len(dev) != self.params.n_devices:
            raise ValueError(
                f"Expected {self.params.n_devices} device positions, got {len(dev)}"
            )
        if len(rates) != len(dev):
            raise ValueError("One arrival rate per device is required.")
        if np.any(rates <= 0) or not np.all(np.isfinite(rates)):
            raise ValueError("Arrival rates must be positive and finite.")
        side = self.params.area_side_m
        for name, pts in (("ap_positions", ap), ("device_positions", dev)):
            if np.any(pts < 0) or np.any(pts > side):
                raise ValueError(f"{name} must lie in [0, {side}]^2")
        for arr in (ap, dev, rates):
            arr.setflags(write=False)
        object.__setattr__(self, "ap_positions", ap)
        object.__setattr__(self, "device_positions", dev)
        object.__setattr__(self, "arrival_rates", rates)

    def __eq__(self, other: Any) -> bool:
        """Bit-exact equality of parameters, positions and traffic."""
        if not isinstance(other, NetworkScenario):
            return False
        return (
            self.params == other.params
            and np.array_equal(self.ap_positions, other.ap_positions)
            and np.array_equal(self.device_positions, other.device_positions)
            and np.array_equal(self.arrival_rates, other.arrival_rates)
        )

    def __str__(self) -> str:
        return (
            f"Scenario with {self.n_aps} APs and {self.n_devices} devices on "
            f"{self.params.area_side_m:g} m square, seed {self.params.seed}"
        )

    @property
    def n_aps(self) -> int:
        return self.params.n_aps

    @property
    def n_devices(self) -> int:
        return self.params.n_devices

    @property
    def bandwidth_hz(self) -> float:
        return self.params.bandwidth_hz

    @property
    def mean_packet_bits(self) -> float:
        return self.params.mean_packet_bits

    @property
    def loads_bits(self) -> np.ndarray:
        """Per-device traffic load λ_j·L in bits/s."""
        return self.arrival_rates * self.params.mean_packet_bits

    @property
    def is_homogeneous(self) -> bool:
        """True if every device carries the params' arrival rate."""
        return bool(np.all(self.arrival_rates == self.params.arrival_rate))

    def with_traffic(self, mean_rate: float) -> NetworkScenario:
        """Same topology with traffic rescaled so the mean arrival rate is
        `mean_rate` packets/s (per-device proportions are kept)."""
        if mean_rate <= 0:
            raise ValueError("Traffic intensity must be positive.")
        params = replace(self.params, arrival_rate=float(mean_rate))
        if self.is_homogeneous:
            return NetworkScenario(params, self.ap_positions, self.device_positions)
        scaled = self.arrival_rates * (mean_rate / self.arrival_rates.mean())
        return NetworkScenario(params, self.ap_positions, self.device_positions, scaled)

    def as_dict(self) -> dict[str, Any]:
        """Convert to the scenario file structure. Used for JSON export."""
        data: dict[str, Any] = {
            "params": self.params.as_dict(),
            "ap_positions": self.ap_positions.tolist(),
            "device_positions": self.device_positions.tolist(),
        }
        if not self.is_homogeneous:
            data["lambda_per_device"] = self.arrival_rates.tolist()
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> NetworkScenario:
        """Create from the scenario file structure. Used for JSON import."""
        if not isinstance(data, dict):
            raise ScenarioParseError("scenario", "top level must be an object")
        if "params" not in data:
            raise ScenarioParseError("params", "missing")
        params = ScenarioParams.from_dict(data["params"])
        expected = {"ap_positions": params.n_aps, "device_positions": params.n_devices}
        points: dict[str, np.ndarray] = {}
        for key, count in expected.items():
            if key not in data:
                raise ScenarioParseError(key, "missing")
            try:
                arr = np.array(data[key], dtype=float)
            except (TypeError, ValueError) as e:
                raise ScenarioParseError(key, "positions must be numbers") from e
            if arr.shape != (count, 2):
                raise ScenarioParseError(
                    key, f"expected {count} (x, y) pairs, got shape {arr.shape}"
                )
            if np.any(arr < 0) or np.any(arr > params.area_side_m):
                raise ScenarioParseError(key, "position outside the area")
            points[key] = arr
        rates = None
        if "lambda_per_device" in data:
            try:
                rates = np.array(data["lambda_per_device"], dtype=float)
            except (TypeError, ValueError) as e:
                raise ScenarioParseError("lambda_per_device", "must be numbers") from e
            if rates.shape != (params.n_devices,) or np.any(rates <= 0):
                raise ScenarioParseError(
                    "lambda_per_device", "need one positive rate per device"
                )
        return cls(params, points["ap_positions"], points["device_positions"], rates)

    def to_json(self, json_path: Path | None = None) -> Path:
        """Save the scenario to a JSON file, by default into JSON_DIR."""
        json_path = json_path or JSON_DIR / (
            f"scenario_{self.n_aps}x{self.n_devices}_seed{self.params.seed}.json"
        )
        with json_path.open("w") as f:
            json.dump(self.as_dict(), f, indent=4)
        logger.info("Wrote scenario to %s", json_path)
        return json_path

    @classmethod
    def from_json(cls, file_path: Path) -> NetworkScenario:
        """Load a scenario from a JSON file."""
        with file_path.open("r") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ScenarioParseError("scenario", f"not valid JSON ({e})") from e
        return cls.from_dict(data)


def generate_scenario(params: ScenarioParams) -> NetworkScenario:
    """Drop APs and devices uniformly at random over the square.
    A pure function of params, seed included."""
    rng = stream_rng(params.seed, PLACEMENT_STREAM)
    side = params.area_side_m
    ap_positions = rng.uniform(0.0, side, size=(params.n_aps, 2))
    device_positions = rng.uniform(0.0, side, size=(params.n_devices, 2))
    scenario = NetworkScenario(params, ap_positions, device_positions)
    logger.info("Generated %s", scenario)
    return scenario


def save_scenario(scenario: NetworkScenario, path: Path) -> None:
    """Write a scenario file."""
    scenario.to_json(Path(path))


def load_scenario(path: Path) -> NetworkScenario:
    """Read a scenario file, raising ScenarioParseError on malformed content."""
    return NetworkScenario.from_json(Path(path))

