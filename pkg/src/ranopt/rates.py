# Power profiles, allocation plans and the rates they deliver

from __future__ import annotations
from dataclasses import dataclass
import json
import logging
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from src.ranopt.channel import LinkGains, Neighborhoods

logger = logging.getLogger(__name__)

# Served-device marker of an AP that transmits nothing
IDLE = -1

# Relative tolerances
BANDWIDTH_TOL = 1e-9  # |sum(beta) - W| <= BANDWIDTH_TOL * W
ACTIVE_SEGMENT_TOL = 1e-9  # a segment is active if beta > ACTIVE_SEGMENT_TOL * W


@dataclass(frozen=True, eq=False)
class PowerProfile:
    """One flat assignment for a spectrum segment: AP i serves device
    served[i] (or IDLE) with PSD psd[i] in W/Hz."""

    served: np.ndarray
    psd: np.ndarray

    def __post_init__(self) -> None:
        """Freeze arrays; an idle AP always carries zero PSD."""
        served = np.array(self.served, dtype=np.int64).reshape(-1)
        psd = np.array(self.psd, dtype=float).reshape(-1)
        if served.shape != psd.shape:
            raise ValueError("served and psd must have one entry per AP")
        if np.any(served < IDLE):
            raise ValueError("Served device indices must be >= -1 (idle).")
        if np.any(psd < 0) or not np.all(np.isfinite(psd)):
            raise ValueError("PSD values must be finite and non-negative.")
        psd = np.where(served == IDLE, 0.0, psd)
        served.setflags(write=False)
        psd.setflags(write=False)
        object.__setattr__(self, "served", served)
        object.__setattr__(self, "psd", psd)

    def __eq__(self, other: Any) -> bool:
        """Exact (z, p) equality."""
        if not isinstance(other, PowerProfile):
            return False
        return np.array_equal(self.served, other.served) and np.array_equal(
            self.psd, other.psd
        )

    def __hash__(self) -> int:
        return hash((self.served.tobytes(), self.psd.tobytes()))

    def __str__(self) -> str:
        links = ", ".join(
            f"{i}->{z} @ {p:.3g}" for i, z, p in self.links()
        )
        return f"Profile [{links or 'all idle'}]"

    @property
    def n_aps(self) -> int:
        return len(self.served)

    @property
    def active(self) -> np.ndarray:
        """Mask of APs serving some device."""
        return self.served != IDLE

    def links(self) -> list[tuple[int, int, float]]:
        """(AP, device, PSD) triples of the serving APs."""
        return [
            (int(i), int(self.served[i]), float(self.psd[i]))
            for i in np.flatnonzero(self.active)
        ]

    def check(self, nb: Neighborhoods) -> None:
        """Raise ValueError unless z_i is in K_i (or idle) and p_i <= P_max."""
        if self.n_aps != nb.n_aps:
            raise ValueError(f"Profile has {self.n_aps} APs, network has {nb.n_aps}")
        aps = np.flatnonzero(self.active)
        devices = self.served[aps]
        if np.any(devices >= nb.n_devices):
            raise ValueError("Profile serves a device outside the network.")
        outside = ~nb.member[aps, devices]
        if np.any(outside):
            i = int(aps[outside][0])
            raise ValueError(f"AP {i} serves device {int(self.served[i])} outside K_{i}")
        if np.any(self.psd > nb.p_max * (1 + 1e-12)):
            raise ValueError("PSD above P_max")

    @classmethod
    def idle(cls, n_aps: int) -> PowerProfile:
        """Profile with every AP silent."""
        return cls(np.full(n_aps, IDLE), np.zeros(n_aps))

    @classmethod
    def from_links(cls, n_aps: int, links: Sequence[Sequence[float]]) -> PowerProfile:
        """Build from (AP, device, PSD) triples; unlisted APs are idle."""
        served = np.full(n_aps, IDLE)
        psd = np.zeros(n_aps)
        for i, z, p in links:
            served[int(i)] = int(z)
            psd[int(i)] = float(p)
        return cls(served, psd)


def spectral_efficiency(gamma: float | np.ndarray) -> float | np.ndarray:
    """Shannon spectral efficiency log2(1 + SINR) in bits/s/Hz."""
    s = np.log2(1.0 + np.asarray(gamma, dtype=float))
    return float(s) if s.ndim == 0 else s


def link_gammas(
    served: np.ndarray, psd: np.ndarray, masked_gains: np.ndarray, noise: np.ndarray
) -> np.ndarray:
    """SINR of every AP towards its served device (0 for idle APs).
    Interference comes only from serving APs inside the device's neighborhood."""
    active = served != IDLE
    power = np.where(active, psd, 0.0)
    received = masked_gains.T @ power
    gamma = np.zeros(len(served))
    aps = np.flatnonzero(active)
    devices = served[aps]
    signal = power[aps] * masked_gains[aps, devices]
    interference = np.maximum(received[devices] - signal, 0.0)
    gamma[aps] = signal / (noise[devices] + interference)
    return gamma


def sinr(
    profile: PowerProfile, link: tuple[int, int], nb: Neighborhoods, gains: LinkGains
) -> float:
    """SINR of link i -> j under the profile; i must belong to N_j."""
    i, j = link
    if not nb.member[i, j]:
        raise ValueError(f"AP {i} is not in the neighborhood of device {j}")
    neighbors = np.flatnonzero(nb.member[:, j])
    power = np.where(profile.active, profile.psd, 0.0)
    others = neighbors[neighbors != i]
    interference = float(power[others] @ gains.g[others, j])
    return float(profile.psd[i] * gains.g[i, j] / (nb.residual_noise[j] + interference))


def efficiency_vector(
    served: np.ndarray, psd: np.ndarray, masked_gains: np.ndarray, noise: np.ndarray
) -> np.ndarray:
    """Per-device bits/s/Hz of one profile, from precomputed masked gains."""
    gamma = link_gammas(served, psd, masked_gains, noise)
    active = served != IDLE
    return np.bincount(
        served[active],
        weights=spectral_efficiency(gamma[active]),
        minlength=masked_gains.shape[1],
    )


def profile_rates(profile: PowerProfile, nb: Neighborhoods, gains: LinkGains) -> np.ndarray:
    """Per-device spectral efficiency (bits/s/Hz) delivered by one profile."""
    return efficiency_vector(
        profile.served, profile.psd, nb.masked(gains), nb.residual_noise
    )


@dataclass(frozen=True, eq=False)
class AllocationPlan:
    """Profiles with their bandwidths (Hz, summing to W) and the implied
    per-device rates (bits/s)."""

    profiles: tuple[PowerProfile, ...]
    beta: np.ndarray
    rates: np.ndarray
    bandwidth_hz: float
    scheme: str = ""

    def __post_init__(self) -> None:
        """Check bandwidths: one per profile, non-negative, summing to W."""
        profiles = tuple(self.profiles)
        beta = np.array(self.beta, dtype=float).reshape(-1)
        rates = np.array(self.rates, dtype=float).reshape(-1)
        if not profiles:
            raise ValueError("A plan needs at least one profile.")
        if len(beta) != len(profiles):
            raise ValueError("One bandwidth per profile is required.")
        if len({p.n_aps for p in profiles}) != 1:
            raise ValueError("All profiles must cover the same APs.")
        if np.any(beta < 0):
            raise ValueError("Bandwidths must be non-negative.")
        check_bandwidth(beta, self.bandwidth_hz)
        beta.setflags(write=False)
        rates.setflags(write=False)
        object.__setattr__(self, "profiles", profiles)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "rates", rates)

    def __str__(self) -> str:
        return (
            f"{self.scheme or 'plan'}: {self.active_segments} active segment(s) "
            f"over {self.bandwidth_hz:g} Hz"
        )

    @property
    def n_aps(self) -> int:
        return self.profiles[0].n_aps

    @property
    def n_devices(self) -> int:
        return len(self.rates)

    @property
    def active_mask(self) -> np.ndarray:
        return self.beta > ACTIVE_SEGMENT_TOL * self.bandwidth_hz

    @property
    def active_segments(self) -> int:
        """Number of profiles with non-negligible bandwidth."""
        return int(self.active_mask.sum())

    def pruned(self, nb: Neighborhoods, gains: LinkGains) -> AllocationPlan:
        """Drop negligible segments, rescale the rest to W and recompute rates."""
        keep = self.active_mask
        if keep.all():
            return self
        beta = self.beta[keep] * (self.bandwidth_hz / self.beta[keep].sum())
        return make_plan(
            [p for p, k in zip(self.profiles, keep) if k],
            beta,
            nb,
            gains,
            self.bandwidth_hz,
            self.scheme,
        )

    def serving_links(self) -> dict[int, list[tuple[int, int, float]]]:
        """For each served device: (segment, AP, PSD) of every link reaching it."""
        links: dict[int, list[tuple[int, int, float]]] = {}
        for m, profile in enumerate(self.profiles):
            if not self.active_mask[m]:
                continue
            for i, z, p in profile.links():
                links.setdefault(z, []).append((m, i, p))
        return dict(sorted(links.items()))

    def as_dict(self) -> dict[str, Any]:
        """Convert to the plan file structure. Used for JSON export."""
        return {
            "scheme": self.scheme,
            "n_aps": self.n_aps,
            "n_devices": self.n_devices,
            "bandwidth_hz": self.bandwidth_hz,
            "segments": [
                {
                    "fraction": float(b / self.bandwidth_hz),
                    "links": [list(link) for link in profile.links()],
                }
                for profile, b in zip(self.profiles, self.beta)
            ],
            "rates": self.rates.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> AllocationPlan:
        """Create from the plan file structure. Used for JSON import."""
        bandwidth = float(data["bandwidth_hz"])
        segments = data["segments"]
        profiles = [PowerProfile.from_links(data["n_aps"], s["links"]) for s in segments]
        beta = np.array([s["fraction"] for s in segments], dtype=float) * bandwidth
        beta *= bandwidth / beta.sum()
        return cls(profiles, beta, data["rates"], bandwidth, data.get("scheme", ""))

    def to_json(self, json_path: Path) -> None:
        """Save the plan to a JSON file."""
        with json_path.open("w") as f:
            json.dump(self.as_dict(), f, indent=4)
        logger.info("Wrote %s plan to %s", self.scheme or "allocation", json_path)

    @classmethod
    def from_json(cls, file_path: Path) -> AllocationPlan:
        """Load a plan from a JSON file."""
        with file_path.open("r") as f:
            return cls.from_dict(json.load(f))


def check_bandwidth(beta: np.ndarray, bandwidth_hz: float) -> None:
    """Raise ValueError unless the bandwidths add up to W."""
    if bandwidth_hz <= 0:
        raise ValueError("Bandwidth must be positive.")
    total = float(np.sum(beta))
    if abs(total - bandwidth_hz) > BANDWIDTH_TOL * bandwidth_hz:
        raise ValueError(f"Segment bandwidths sum to {total}, expected {bandwidth_hz}")


def plan_rates(plan: AllocationPlan, nb: Neighborhoods, gains: LinkGains) -> np.ndarray:
    """Per-device rates r_j = sum_m beta^m * rho^m_j in bits/s."""
    return rates_for(plan.profiles, plan.beta, nb, gains, plan.bandwidth_hz)


def rates_for(
    profiles: Sequence[PowerProfile],
    beta: np.ndarray,
    nb: Neighborhoods,
    gains: LinkGains,
    bandwidth_hz: float,
) -> np.ndarray:
    """Per-device rates of profiles with the given bandwidths."""
    check_bandwidth(beta, bandwidth_hz)
    masked = nb.masked(gains)
    rho = np.array(
        [efficiency_vector(p.served, p.psd, masked, nb.residual_noise) for p in profiles]
    )
    return np.asarray(beta, dtype=float) @ rho


def plan_power(plan: AllocationPlan) -> np.ndarray:
    """Per-AP total transmit power P_i = sum_m beta^m p_i^m in W."""
    return plan.beta @ np.array([p.psd for p in plan.profiles])


def make_plan(
    profiles: Sequence[PowerProfile],
    beta: np.ndarray,
    nb: Neighborhoods,
    gains: LinkGains,
    bandwidth_hz: float,
    scheme: str = "",
) -> AllocationPlan:
    """Plan whose rates are computed from the profiles and bandwidths."""
    rates = rates_for(profiles, beta, nb, gains, bandwidth_hz)
    return AllocationPlan(tuple(profiles), beta, rates, bandwidth_hz, scheme)
