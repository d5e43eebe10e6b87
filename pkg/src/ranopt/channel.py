# Average link gains (pathloss + shadowing) and pruned neighborhoods

from __future__ import annotations
from dataclasses import dataclass
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from src.ranopt.scenario import CHANNEL_STREAM, NetworkScenario, stream_rng

logger = logging.getLogger(__name__)

# Pathloss constants (R in meters)
LOS_INTERCEPT_DB = 30.18
LOS_SLOPE_DB = 26.7
NLOS_INTERCEPT_DB = 34.53
NLOS_SLOPE_DB = 36.0
MIN_DISTANCE_M = 1.0


def pathloss_db(distance_m: float | np.ndarray, los: bool | np.ndarray) -> float | np.ndarray:
    """LTE pathloss in dB for a LOS or NLOS link, distance clamped at 1 m."""
    r = np.maximum(np.asarray(distance_m, dtype=float), MIN_DISTANCE_M)
    log_r = np.log10(r)
    loss = np.where(
        los,
        LOS_INTERCEPT_DB + LOS_SLOPE_DB * log_r,
        NLOS_INTERCEPT_DB + NLOS_SLOPE_DB * log_r,
    )
    return float(loss) if loss.ndim == 0 else loss


def distances(scenario: NetworkScenario) -> np.ndarray:
    """AP-to-device distance matrix (n x k) in meters."""
    diff = scenario.ap_positions[:, None, :] - scenario.device_positions[None, :, :]
    return np.linalg.norm(diff, axis=2)


@dataclass(frozen=True, eq=False)
class LinkGains:
    """Linear power gains g[i, j] of every AP i -> device j link."""

    g: np.ndarray
    los_flags: np.ndarray
    shadowing_db: np.ndarray

    @property
    def n_aps(self) -> int:
        return self.g.shape[0]

    @property
    def n_devices(self) -> int:
        return self.g.shape[1]

    def to_csv(self, csv_path: Path) -> None:
        """Dump g with one row per AP and one column per device."""
        frame = pd.DataFrame(
            self.g,
            index=pd.Index(range(self.n_aps), name="ap"),
            columns=[f"device_{j}" for j in range(self.n_devices)],
        )
        frame.to_csv(csv_path, float_format="%.10e")
        logger.info("Wrote gain matrix to %s", csv_path)


def build_gains(scenario: NetworkScenario) -> LinkGains:
    """Gains from the LOS/NLOS pathloss model and log-normal shadowing.
    LOS state per link is Bernoulli with probability exp(-R / los_scale_m)
    unless the scenario forces LOS or NLOS. All draws come from the
    scenario's channel stream, in a fixed order, whatever the mode."""
    params = scenario.params
    rng = stream_rng(params.seed, CHANNEL_STREAM)
    dist = distances(scenario)
    los_draw = rng.random(dist.shape)
    normal_draw = rng.standard_normal(dist.shape)
    if params.los_mode == "los":
        los = np.ones(dist.shape, dtype=bool)
    elif params.los_mode == "nlos":
        los = np.zeros(dist.shape, dtype=bool)
    else:
        los = los_draw < np.exp(-dist / params.los_scale_m)
    sigma = np.where(los, params.shadowing_los_db, params.shadowing_nlos_db)
    shadowing = normal_draw * sigma
    g = 10.0 ** (-(pathloss_db(dist, los) + shadowing) / 10.0)
    for arr in (g, los, shadowing):
        arr.setflags(write=False)
    return LinkGains(g=g, los_flags=los, shadowing_db=shadowing)


@dataclass(frozen=True, eq=False)
class Neighborhoods:
    """Pruned link structure: N_j (APs heard by device j), K_i (devices AP i
    may serve), and residual noise n_j covering every AP outside N_j."""

    member: np.ndarray  # n x k, member[i, j] <=> i in N_j <=> j in K_i
    residual_noise: np.ndarray
    p_max: float
    noise_psd: float

    def __post_init__(self) -> None:
        member = np.array(self.member, dtype=bool)
        noise = np.array(self.residual_noise, dtype=float)
        member.setflags(write=False)
        noise.setflags(write=False)
        object.__setattr__(self, "member", member)
        object.__setattr__(self, "residual_noise", noise)

    @property
    def n_aps(self) -> int:
        return self.member.shape[0]

    @property
    def n_devices(self) -> int:
        return self.member.shape[1]

    @property
    def n_of_device(self) -> list[np.ndarray]:
        """N_j for every device, AP indices ascending."""
        return [np.flatnonzero(self.member[:, j]) for j in range(self.n_devices)]

    @property
    def k_of_ap(self) -> list[np.ndarray]:
        """K_i for every AP, device indices ascending."""
        return [np.flatnonzero(self.member[i]) for i in range(self.n_aps)]

    @property
    def unserved(self) -> np.ndarray:
        """Devices with an empty neighborhood; they cannot receive service."""
        return np.flatnonzero(~self.member.any(axis=0))

    @property
    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """All (AP, device) candidate links, sorted by AP then device."""
        return np.nonzero(self.member)

    def masked(self, gains: LinkGains) -> np.ndarray:
        """Gain matrix with every link outside the neighborhoods zeroed."""
        if gains.g.shape != self.member.shape:
            raise ValueError("Gains and neighborhoods describe different networks.")
        return np.where(self.member, gains.g, 0.0)


def _strongest(indices: np.ndarray, gains: np.ndarray, cap: int) -> np.ndarray:
    """Keep the `cap` largest gains, ties to the lower index."""
    order = np.lexsort((indices, -gains))
    return indices[order[:cap]]


def build_neighborhoods(scenario: NetworkScenario, gains: LinkGains) -> Neighborhoods:
    """Candidate sets from the SNR threshold at full power, capped at α on
    both sides. Excluded APs enter n_j at full power."""
    params = scenario.params
    p_max, n0 = params.p_max, params.noise_psd
    cap = params.neighborhood_cap
    rx = p_max * gains.g
    member = rx > params.snr_threshold * n0
    for j in np.flatnonzero(member.sum(axis=0) > cap):
        aps = np.flatnonzero(member[:, j])
        member[:, j] = False
        member[_strongest(aps, gains.g[aps, j], cap), j] = True
    for i in np.flatnonzero(member.sum(axis=1) > cap):
        devices = np.flatnonzero(member[i])
        member[i] = False
        member[i, _strongest(devices, gains.g[i, devices], cap)] = True
    residual = n0 + np.where(member, 0.0, rx).sum(axis=0)
    nb = Neighborhoods(member=member, residual_noise=residual, p_max=p_max, noise_psd=n0)
    if len(nb.unserved):
        logger.warning(
            "%d device(s) hear no AP above the SNR threshold: %s",
            len(nb.unserved),
            nb.unserved.tolist(),
        )
    return nb


def build_network(scenario: NetworkScenario) -> tuple[LinkGains, Neighborhoods]:
    """Gains and pruned neighborhoods of a scenario."""
    gains = build_gains(scenario)
    return gains, build_neighborhoods(scenario, gains)
