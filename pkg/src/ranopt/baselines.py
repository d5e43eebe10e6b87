# The comparison schemes and per-plan reporting shared by all of them

from __future__ import annotations
from dataclasses import dataclass, replace
from fractions import Fraction
import logging
import math
import time
from typing import Any, Sequence

import numpy as np

from src.ranopt.channel import LinkGains, Neighborhoods
from src.ranopt.pursuit import PursuitOptions, PursuitState, pursue
from src.ranopt.rates import IDLE, AllocationPlan, PowerProfile, make_plan, plan_power
from src.ranopt.utility import UtilitySpec

logger = logging.getLogger(__name__)

SCHEMES = ("proposed", "pattern", "optassoc", "maxrsrp")

# (better, worse) pairs whose utilities must be ordered on every instance
DOMINANCE_CHAIN = (("proposed", "pattern"), ("optassoc", "maxrsrp"))
DOMINANCE_TOL = 1e-6


def strongest_aps(nb: Neighborhoods, gains: LinkGains) -> np.ndarray:
    """Strongest in-neighborhood AP of every device, IDLE if N_j is empty."""
    best = np.argmax(np.where(nb.member, gains.g, -np.inf), axis=0)
    return np.where(nb.member.any(axis=0), best, IDLE)


def full_reuse_maxrsrp(
    nb: Neighborhoods, gains: LinkGains, bandwidth_hz: float
) -> AllocationPlan:
    """Every device attaches to its strongest AP; an AP claimed by several
    devices gives each an equal share of the band, all claimed APs at P_max.
    Shares become segments cut at every multiple of 1/|C_i|."""
    owner = strongest_aps(nb, gains)
    claims = {int(i): np.flatnonzero(owner == i) for i in np.unique(owner[owner != IDLE])}
    unserved = np.flatnonzero(owner == IDLE)
    if len(unserved):
        logger.warning(
            "maxrsrp leaves %d device(s) unserved: %s", len(unserved), unserved.tolist()
        )
    if not claims:
        idle = [PowerProfile.idle(nb.n_aps)]
        return make_plan(idle, [bandwidth_hz], nb, gains, bandwidth_hz, "maxrsrp")

    cuts = sorted({Fraction(t, len(c)) for c in claims.values() for t in range(len(c) + 1)})
    profiles, fractions = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = (lo + hi) / 2
        served = np.full(nb.n_aps, IDLE)
        for i, devices in claims.items():
            served[i] = devices[int(mid * len(devices))]
        profiles.append(PowerProfile(served, np.full(nb.n_aps, nb.p_max)))
        fractions.append(float(hi - lo))
    beta = np.array(fractions) * (bandwidth_hz / math.fsum(fractions))
    return make_plan(profiles, beta, nb, gains, bandwidth_hz, "maxrsrp")


def _with_mode(opts: PursuitOptions | None, power_mode: str) -> PursuitOptions:
    opts = opts or PursuitOptions()
    return replace(opts, solver=replace(opts.solver, power_mode=power_mode))


def full_reuse_opt_assoc(
    u: UtilitySpec,
    nb: Neighborhoods,
    gains: LinkGains,
    bandwidth_hz: float,
    opts: PursuitOptions | None = None,
) -> tuple[AllocationPlan, PursuitState]:
    """Pursuit with powers frozen at P_max, started from the maxrsrp plan so
    association and band shares are optimized from that point on."""
    start = full_reuse_maxrsrp(nb, gains, bandwidth_hz)
    return pursue(
        u,
        nb,
        gains,
        bandwidth_hz,
        _with_mode(opts, "fixed"),
        initial_profiles=start.profiles,
        initial_beta=start.beta,
        scheme="optassoc",
    )


def pattern_pursuit_full_power(
    u: UtilitySpec,
    nb: Neighborhoods,
    gains: LinkGains,
    bandwidth_hz: float,
    opts: PursuitOptions | None = None,
) -> tuple[AllocationPlan, PursuitState]:
    """Pursuit with on/off powers: an AP either serves at P_max or stays idle."""
    return pursue(u, nb, gains, bandwidth_hz, _with_mode(opts, "binary"), scheme="pattern")


def proposed(
    u: UtilitySpec,
    nb: Neighborhoods,
    gains: LinkGains,
    bandwidth_hz: float,
    opts: PursuitOptions | None = None,
) -> tuple[AllocationPlan, PursuitState]:
    """Full pursuit with power control, started from the full-reuse profile."""
    return pursue(u, nb, gains, bandwidth_hz, _with_mode(opts, "optimize"))


def run_scheme(
    scheme: str,
    u: UtilitySpec,
    nb: Neighborhoods,
    gains: LinkGains,
    bandwidth_hz: float,
    opts: PursuitOptions | None = None,
) -> tuple[AllocationPlan, PursuitState | None]:
    """Dispatch by scheme name; maxrsrp has no pursuit state."""
    if scheme == "maxrsrp":
        return full_reuse_maxrsrp(nb, gains, bandwidth_hz), None
    if scheme == "optassoc":
        return full_reuse_opt_assoc(u, nb, gains, bandwidth_hz, opts)
    if scheme == "pattern":
        return pattern_pursuit_full_power(u, nb, gains, bandwidth_hz, opts)
    if scheme == "proposed":
        return proposed(u, nb, gains, bandwidth_hz, opts)
    raise ValueError(f"Unknown scheme {scheme!r}, expected one of {SCHEMES}")


def dominance_violations(utilities: dict[str, float]) -> list[str]:
    """Broken links of the dominance chain among the schemes present."""
    broken = []
    for better, worse in DOMINANCE_CHAIN:
        if better not in utilities or worse not in utilities:
            continue
        hi, lo = utilities[better], utilities[worse]
        if hi < lo - DOMINANCE_TOL * max(1.0, abs(lo)):
            broken.append(f"{better}<{worse}")
    if broken:
        logger.warning("Dominance chain broken: %s (%s)", ", ".join(broken), utilities)
    return broken


def network_mean_delay(rates_bps: np.ndarray, u: UtilitySpec) -> float:
    """Traffic-weighted M/M/1 mean packet delay in seconds, inf when unstable."""
    value = u.value(rates_bps)
    if not math.isfinite(value):
        return math.inf
    return -value / float(np.sum(u.arrival_rates))


def plan_report(plan: AllocationPlan, u: UtilitySpec) -> dict[str, Any]:
    """Utility, delay and energy figures of one plan."""
    powers = plan_power(plan)
    report = {
        "scheme": plan.scheme,
        "utility": u.value(plan.rates),
        "active_segments": plan.active_segments,
        "active_aps": int(np.sum(powers > 0)),
        "total_power_w": float(powers.sum()),
        "energy_utility": u.energy(powers),
        "served_devices": int(np.sum(plan.rates > 0)),
    }
    if u.is_delay:
        report["mean_delay_s"] = network_mean_delay(plan.rates, u)
        report["shortfall_pps"] = u.shortfall(plan.rates) / u.mean_packet_bits
    return report


def describe_plan(plan: AllocationPlan) -> str:
    """Readable allocation: segments with their links, then devices with their APs."""
    lines = [str(plan)]
    for m, (profile, b) in enumerate(zip(plan.profiles, plan.beta)):
        links = ", ".join(f"AP{i}->{j} @ {p:.3e} W/Hz" for i, j, p in profile.links())
        lines.append(f"  segment {m}: {b / plan.bandwidth_hz:.4f} W: {links or 'all idle'}")
    for j, links in plan.serving_links().items():
        aps = ", ".join(f"AP{i} (segment {m})" for m, i, _ in links)
        lines.append(f"  device {j}: {plan.rates[j]:.4e} bit/s from {aps}")
    return "\n".join(lines)


@dataclass(frozen=True, eq=False)
class SchemeRun:
    scheme: str
    plan: AllocationPlan
    state: PursuitState | None
    runtime_s: float


def compare_point(
    u: UtilitySpec,
    nb: Neighborhoods,
    gains: LinkGains,
    bandwidth_hz: float,
    schemes: Sequence[str] = SCHEMES,
    opts: PursuitOptions | None = None,
) -> dict[str, SchemeRun]:
    """Run the requested schemes on one traffic point, each on its own."""
    unknown = set(schemes) - set(SCHEMES)
    if unknown:
        raise ValueError(f"Unknown scheme(s) {sorted(unknown)}")
    results: dict[str, SchemeRun] = {}
    for scheme in schemes:
        started = time.perf_counter()
        plan, state = run_scheme(scheme, u, nb, gains, bandwidth_hz, opts)
        results[scheme] = SchemeRun(scheme, plan, state, time.perf_counter() - started)
    return results


def throughput_knee(sweep: Sequence[float], delays: Sequence[float]) -> float:
    """Largest traffic value with a finite delay, nan if there is none."""
    finite = [x for x, d in zip(sweep, delays) if math.isfinite(d)]
    return max(finite) if finite else math.nan
