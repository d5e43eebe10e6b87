# Profile pursuit: grow a set of power profiles against the linearized
# utility and re-split the band over them (Frank-Wolfe on the simplex)

from __future__ import annotations
from dataclasses import dataclass, field, replace
import itertools
import logging
import math
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.optimize import linprog

from src.ranopt.affine_solver import (
    AffineSolveReport,
    SolverError,
    SolverOptions,
    random_profile,
    solve_affine,
)
from src.ranopt.channel import LinkGains, Neighborhoods
from src.ranopt.rates import (
    ACTIVE_SEGMENT_TOL,
    IDLE,
    AllocationPlan,
    PowerProfile,
    efficiency_vector,
    make_plan,
)
from src.ranopt.utility import UtilitySpec

logger = logging.getLogger(__name__)

BETA_TOL = 1e-6  # Frank-Wolfe gap relative to |u|
BETA_MAX_ITERS = 2000
ARMIJO = 1e-4
MAX_HALVINGS = 60
MAX_REDRAWS = 100
SPARSITY_TOL = 1e-4
MAX_SPARSITY_SUBSETS = 50_000

_TINY = 1e-300


class PursuitError(RuntimeError):
    """The inner solver failed inside an outer iteration."""

    def __init__(self, outer_iteration: int, cause: Exception) -> None:
        super().__init__(f"Outer iteration {outer_iteration}: {cause}")
        self.outer_iteration = outer_iteration


@dataclass(frozen=True)
class PursuitOptions:
    max_profiles: int | None = None  # None: k + 1
    tol_outer: float = 1e-5
    patience: int = 3
    seed: int = 0
    solver: SolverOptions = field(default_factory=SolverOptions)
    beta_tol: float = BETA_TOL
    beta_max_iters: int = BETA_MAX_ITERS

    def __post_init__(self) -> None:
        if self.max_profiles is not None and self.max_profiles < 1:
            raise ValueError("max_profiles must be at least 1")
        if self.tol_outer <= 0 or self.patience < 1:
            raise ValueError("tol_outer must be positive and patience at least 1")


@dataclass(frozen=True, eq=False)
class BetaSolution:
    """Band split over a fixed profile set. `feasible` is False when no split
    keeps every device below its load; beta then minimizes the shortfall and
    `prices` holds the shortfall's marginal value per bit/s of each device."""

    beta: np.ndarray
    rates: np.ndarray
    utility: float
    iterations: int
    feasible: bool = True
    prices: np.ndarray | None = None

    @property
    def fractions(self) -> np.ndarray:
        return self.beta / self.beta.sum()


@dataclass
class PursuitState:
    profiles: list[PowerProfile]
    beta: np.ndarray
    rates: np.ndarray
    feasible: bool
    utility_trace: list[float] = field(default_factory=list)
    size_trace: list[int] = field(default_factory=list)
    active_trace: list[int] = field(default_factory=list)
    inner_iterations: list[int] = field(default_factory=list)

    @property
    def outer_iterations(self) -> int:
        return len(self.utility_trace) - 1

    @property
    def utility(self) -> float:
        return self.utility_trace[-1]

    def record(self, solution: BetaSolution, bandwidth_hz: float, inner: int) -> None:
        self.beta = solution.beta
        self.rates = solution.rates
        self.feasible = solution.feasible
        self.utility_trace.append(solution.utility)
        self.size_trace.append(len(self.profiles))
        self.active_trace.append(active_count(solution.beta, bandwidth_hz))
        self.inner_iterations.append(inner)

    def to_csv(self, csv_path: Path) -> None:
        """Pursuit trace: outer_iter, utility, |P|, active segments, inner solver iterations."""
        pd.DataFrame(
            {
                "outer_iter": range(len(self.utility_trace)),
                "utility": self.utility_trace,
                "profiles": self.size_trace,
                "active_segments": self.active_trace,
                "inner_iterations": self.inner_iterations,
            }
        ).to_csv(csv_path, index=False, float_format="%.12e")


def active_count(beta: np.ndarray, bandwidth_hz: float) -> int:
    return int(np.sum(np.asarray(beta) > ACTIVE_SEGMENT_TOL * bandwidth_hz))


def _max_min_margin(capacity: np.ndarray, u: UtilitySpec) -> tuple[np.ndarray, float]:
    """LP: maximize t with μ_j - a_j >= t a_j for all j over the simplex."""
    m = capacity.shape[0]
    scaled = capacity / (u.mean_packet_bits * u.arrival_rates)[None, :]
    a_ub = np.c_[-scaled.T, np.ones(scaled.shape[1])]
    res = linprog(
        np.r_[np.zeros(m), -1.0],
        A_ub=a_ub,
        b_ub=-np.ones(scaled.shape[1]),
        A_eq=np.r_[np.ones(m), 0.0][None, :],
        b_eq=[1.0],
        bounds=[(0, None)] * m + [(None, None)],
        method="highs",
    )
    if not res.success:
        raise SolverError(f"Margin LP failed: {res.message}")
    return _on_simplex(res.x[:m]), float(res.x[-1])


def _min_shortfall(capacity: np.ndarray, u: UtilitySpec) -> tuple[np.ndarray, np.ndarray]:
    """LP: minimize sum_j (a_j - μ_j)^+ over the simplex. Also returns the
    dual price of every device's load row, per bit/s of its rate."""
    m, k = capacity.shape
    service = capacity / u.mean_packet_bits
    res = linprog(
        np.r_[np.zeros(m), np.ones(k)],
        A_ub=np.c_[-service.T, -np.eye(k)],
        b_ub=-u.arrival_rates,
        A_eq=np.r_[np.ones(m), np.zeros(k)][None, :],
        b_eq=[1.0],
        bounds=[(0, None)] * (m + k),
        method="highs",
    )
    if not res.success:
        raise SolverError(f"Shortfall LP failed: {res.message}")
    x = _on_simplex(res.x[:m])
    prices = np.maximum(-np.asarray(res.ineqlin.marginals, dtype=float), 0.0)
    if not prices.any():
        # Degenerate duals: price the unmet load instead
        prices = np.maximum(u.loads_bits - x @ capacity, 0.0)
        prices = prices / max(prices.max(), _TINY)
    return x, prices / u.mean_packet_bits


def _on_simplex(x: np.ndarray) -> np.ndarray:
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    return x / x.sum()


def optimize_weights(
    rho: np.ndarray,
    u: UtilitySpec,
    bandwidth_hz: float,
    start: np.ndarray | None = None,
    tol: float = BETA_TOL,
    max_iters: int = BETA_MAX_ITERS,
) -> BetaSolution:
    """Maximize u(W x @ rho) over the unit simplex with away-step Frank-Wolfe
    and Armijo backtracking. rho holds one spectral-efficiency row per profile."""
    rho = np.atleast_2d(np.asarray(rho, dtype=float))
    if rho.shape[0] == 0:
        raise ValueError("At least one profile is required.")
    capacity = bandwidth_hz * rho

    def value(x: np.ndarray) -> float:
        return u.value(x @ capacity)

    if start is None:
        x = np.zeros(len(rho))
        x[int(np.argmax([u.value(c) for c in capacity]))] = 1.0
    else:
        x = np.asarray(start, dtype=float)
        if x.shape != (len(rho),) or np.any(x < 0) or x.sum() <= 0:
            raise ValueError("Start weights must be one non-negative value per profile.")
        x = x / x.sum()
    f = value(x)

    def solution(
        x: np.ndarray, iterations: int, feasible: bool = True, prices: np.ndarray | None = None
    ) -> BetaSolution:
        beta = bandwidth_hz * x
        beta.setflags(write=False)
        return BetaSolution(beta, x @ capacity, value(x), iterations, feasible, prices)

    if not math.isfinite(f) and u.is_delay:
        x_lp, margin = _max_min_margin(capacity, u)
        if margin <= 0 or not math.isfinite(value(x_lp)):
            logger.debug("No band split meets every load, minimizing the shortfall")
            x_lp, prices = _min_shortfall(capacity, u)
            return solution(x_lp, 0, feasible=False, prices=prices)
        x, f = x_lp, value(x_lp)

    iteration = 0
    for iteration in range(1, max_iters + 1):
        grad = capacity @ u.gradient(x @ capacity)
        s = int(np.argmax(grad))
        support = np.flatnonzero(x > 0)
        v = int(support[np.argmin(grad[support])])
        fw_gap = grad[s] - grad @ x
        if fw_gap <= tol * max(abs(f), _TINY):
            logger.debug("Frank-Wolfe gap %.3e below tolerance after %d steps", fw_gap, iteration)
            break
        away = grad @ x - grad[v] > fw_gap and x[v] < 1.0
        if away:
            direction = x.copy()
            direction[v] -= 1.0
            step_max = x[v] / (1.0 - x[v])
        else:
            direction = -x
            direction[s] += 1.0
            step_max = 1.0
        slope = grad @ direction
        step = step_max
        for _ in range(MAX_HALVINGS):
            candidate = np.maximum(x + step * direction, 0.0)
            if away and step == step_max:
                candidate[v] = 0.0
            f_candidate = value(candidate)
            if f_candidate >= f + ARMIJO * step * slope:
                break
            step *= 0.5
        else:
            logger.debug("Line search stalled after %d steps", iteration)
            break
        x = candidate / candidate.sum()
        f = value(x)
    else:
        logger.debug("Frank-Wolfe stopped at the %d-iteration cap", max_iters)
    return solution(x, iteration)


def optimize_beta(
    profiles: Sequence[PowerProfile],
    u: UtilitySpec,
    nb: Neighborhoods,
    gains: LinkGains,
    bandwidth_hz: float,
    start: np.ndarray | None = None,
) -> BetaSolution:
    """Best band split over the given profiles."""
    if not profiles:
        raise ValueError("optimize_beta needs at least one profile.")
    masked = nb.masked(gains)
    rho = np.array(
        [efficiency_vector(p.served, p.psd, masked, nb.residual_noise) for p in profiles]
    )
    if start is not None:
        start = np.asarray(start, dtype=float) / bandwidth_hz
    return optimize_weights(rho, u, bandwidth_hz, start)


def full_reuse_profile(nb: Neighborhoods, gains: LinkGains) -> PowerProfile:
    """Every AP at P_max serving its strongest candidate; idle if K_i is empty."""
    served = np.full(nb.n_aps, IDLE)
    has_candidates = nb.member.any(axis=1)
    strongest = np.argmax(np.where(nb.member, gains.g, -np.inf), axis=1)
    served[has_candidates] = strongest[has_candidates]
    return PowerProfile(served, np.full(nb.n_aps, nb.p_max))


def _progress(solution: BetaSolution, u: UtilitySpec) -> float:
    """Utility when feasible, otherwise minus the unmet load in packets/s."""
    if solution.feasible and math.isfinite(solution.utility):
        return solution.utility
    return -u.shortfall(solution.rates) / (u.mean_packet_bits if u.is_delay else 1.0)


def pricing_weights(solution: BetaSolution, u: UtilitySpec) -> np.ndarray:
    """Per bit/s weights for the next profile: the utility gradient, or the
    shortfall prices while no band split meets every load."""
    if solution.feasible or solution.prices is None:
        return np.maximum(u.gradient(solution.rates), 0.0)
    return solution.prices


def candidate_reports(
    weights: np.ndarray, nb: Neighborhoods, gains: LinkGains, opts: SolverOptions
) -> list[AffineSolveReport]:
    """Inner solves for the next profile. With optimized powers the best
    on/off profile and its power-controlled refinement are offered too,
    so a full-power column stays within reach."""
    reports = [solve_affine(weights, nb, gains, opts=opts)]
    if opts.power_mode == "optimize":
        on_off = solve_affine(weights, nb, gains, opts=replace(opts, power_mode="binary"))
        refined = solve_affine(weights, nb, gains, init=on_off.profile, opts=opts)
        reports += [refined, on_off]
    return reports


def single_ap_changes(
    profile: PowerProfile, nb: Neighborhoods, power_mode: str
) -> list[PowerProfile]:
    """Profiles that differ from `profile` at exactly one AP."""
    changes = []
    for i, candidates in enumerate(nb.k_of_ap):
        options = list(candidates)
        if power_mode != "fixed" or not options:
            options.append(IDLE)
        for z in options:
            if z == profile.served[i]:
                continue
            served = profile.served.copy()
            psd = profile.psd.copy()
            served[i] = z
            if power_mode != "optimize" or psd[i] == 0.0:
                psd[i] = nb.p_max
            changes.append(PowerProfile(served, psd))
    return changes


def distinct_profile(
    profile: PowerProfile,
    known: set[PowerProfile],
    nb: Neighborhoods,
    rng: np.random.Generator,
    power_mode: str,
) -> PowerProfile | None:
    """A profile outside `known`: random draws first, then every single-AP
    change of `profile`. None when all of those are known already."""
    for _ in range(MAX_REDRAWS):
        candidate = random_profile(nb, rng, power_mode)
        if candidate not in known:
            return candidate
    return next((p for p in single_ap_changes(profile, nb, power_mode) if p not in known), None)


def pursue(
    u: UtilitySpec,
    nb: Neighborhoods,
    gains: LinkGains,
    bandwidth_hz: float,
    opts: PursuitOptions | None = None,
    initial_profiles: Sequence[PowerProfile] | None = None,
    initial_beta: np.ndarray | None = None,
    scheme: str = "proposed",
) -> tuple[AllocationPlan, PursuitState]:
    """Profile pursuit. Starts from the full-reuse profile (or the given ones)
    and adds one profile per outer iteration: the inner solver's answer to the
    utility gradient, or to the shortfall prices while the loads cannot all be
    met. Among several new candidates the one whose band re-split helps most
    is kept. Stops when the utility stalls for `patience` iterations or the
    profile set reaches max_profiles."""
    opts = opts or PursuitOptions()
    max_profiles = opts.max_profiles or nb.n_devices + 1
    rng = np.random.default_rng(opts.seed)
    masked = nb.masked(gains)

    def efficiency(profile: PowerProfile) -> np.ndarray:
        return efficiency_vector(profile.served, profile.psd, masked, nb.residual_noise)

    def resplit(rows: np.ndarray, start: np.ndarray | None) -> BetaSolution:
        return optimize_weights(rows, u, bandwidth_hz, start, opts.beta_tol, opts.beta_max_iters)

    profiles = list(initial_profiles or [full_reuse_profile(nb, gains)])
    for profile in profiles:
        profile.check(nb)
    if len(set(profiles)) != len(profiles):
        raise ValueError("Initial profiles must be distinct.")
    rho = np.array([efficiency(p) for p in profiles])
    start = None if initial_beta is None else np.asarray(initial_beta, float) / bandwidth_hz
    solution = resplit(rho, start)
    state = PursuitState(profiles, solution.beta, solution.rates, solution.feasible)
    state.record(solution, bandwidth_hz, 0)
    score = _progress(solution, u)
    was_feasible = solution.feasible

    stalled = 0
    outer = 0
    while len(profiles) < max_profiles:
        outer += 1
        weights = pricing_weights(solution, u) * bandwidth_hz
        try:
            reports = candidate_reports(weights, nb, gains, opts.solver)
        except SolverError as e:
            raise PursuitError(outer, e) from e
        known = set(profiles)
        fresh: dict[PowerProfile, int] = {}
        for report in reports:
            if report.profile not in known:
                fresh.setdefault(report.profile, report.iterations)
        if not fresh:
            candidate = distinct_profile(
                reports[0].profile, known, nb, rng, opts.solver.power_mode
            )
            if candidate is None:
                logger.info("Every profile within reach is already in use, stopping")
                break
            logger.debug("The inner solver repeated a known profile, injected another one")
            fresh[candidate] = reports[0].iterations

        start = np.r_[solution.fractions, 0.0]
        best = None
        for candidate, inner in fresh.items():
            rows = np.vstack([rho, efficiency(candidate)])
            trial = resplit(rows, start)
            if best is None or _progress(trial, u) > _progress(best[2], u):
                best = (candidate, rows, trial, inner)
        candidate, rho, solution, inner = best
        profiles.append(candidate)
        state.record(solution, bandwidth_hz, inner)

        previous, score = score, _progress(solution, u)
        if solution.feasible and not was_feasible:
            improvement = math.inf
        else:
            improvement = (score - previous) / max(abs(previous), _TINY)
        was_feasible = solution.feasible
        logger.info(
            "Outer iteration %d: utility %.6g, %d profiles, %d active, %d inner iterations",
            outer,
            solution.utility,
            len(profiles),
            state.active_trace[-1],
            inner,
        )
        stalled = stalled + 1 if improvement < opts.tol_outer else 0
        if stalled >= opts.patience:
            break

    plan = make_plan(profiles, state.beta, nb, gains, bandwidth_hz, scheme).pruned(nb, gains)
    return plan, state


@dataclass(frozen=True)
class SparsityReport:
    n_aps: int
    n_devices: int
    utility_kind: str
    n_profiles: int
    best: dict[int, float]
    passed: bool

    def as_dict(self) -> dict:
        return {
            "n_aps": self.n_aps,
            "n_devices": self.n_devices,
            "utility": self.utility_kind,
            "profiles": self.n_profiles,
            "best": {str(m): v for m, v in self.best.items()},
            "passed": self.passed,
        }


def grid_profiles(nb: Neighborhoods, levels: Sequence[float]) -> list[PowerProfile]:
    """Every profile with each AP idle or serving a candidate at a grid PSD."""
    levels = sorted({float(p) for p in levels if p > 0})
    options = []
    for candidates in nb.k_of_ap:
        options.append([(IDLE, 0.0)] + [(int(j), p) for j in candidates for p in levels])
    return [
        PowerProfile([z for z, _ in combo], [p for _, p in combo])
        for combo in itertools.product(*options)
    ]


def pareto_rows(rows: np.ndarray) -> np.ndarray:
    """Indices of distinct rows not dominated elementwise by another row."""
    _, unique = np.unique(rows, axis=0, return_index=True)
    unique = np.sort(unique)
    keep = []
    for a in unique:
        dominated = np.all(rows[unique] >= rows[a], axis=1) & np.any(
            rows[unique] > rows[a], axis=1
        )
        if not dominated.any():
            keep.append(a)
    return np.array(keep, dtype=int)


def verify_sparsity(
    u: UtilitySpec,
    nb: Neighborhoods,
    gains: LinkGains,
    bandwidth_hz: float,
    levels: Sequence[float],
    max_pieces: int | None = None,
) -> SparsityReport:
    """Brute-force check that k segments are enough on a gridded tiny network:
    for every m up to k + 2, the best utility over any m grid profiles mixed
    by bandwidth. Passes when best(k) >= best(k + 2) - 1e-4 (relative beyond 1)."""
    n, k = nb.n_aps, nb.n_devices
    if n > 2 or k > 2 or len(levels) > 5:
        raise ValueError("Sparsity check needs n <= 2, k <= 2 and at most 5 power levels.")
    max_pieces = max_pieces or k + 2
    profiles = grid_profiles(nb, levels)
    masked = nb.masked(gains)
    rho = np.array(
        [efficiency_vector(p.served, p.psd, masked, nb.residual_noise) for p in profiles]
    )
    # Mixtures of dominated rate vectors never beat the dominating ones
    # under a monotone utility
    rho = rho[pareto_rows(rho)]
    capacity = bandwidth_hz * rho

    best: dict[int, float] = {}
    for m in range(1, max_pieces + 1):
        size = min(m, len(rho))
        subsets = math.comb(len(rho), size)
        if subsets > MAX_SPARSITY_SUBSETS:
            raise ValueError(f"{subsets} subsets of size {size}; instance too large")
        value = best.get(m - 1, -math.inf)
        for subset in itertools.combinations(range(len(rho)), size):
            rows = list(subset)
            # Monotone bound: no mixture beats the elementwise best rates
            if u.value(capacity[rows].max(axis=0)) <= value:
                continue
            solution = optimize_weights(rho[rows], u, bandwidth_hz, tol=1e-9)
            value = max(value, solution.utility if solution.feasible else -math.inf)
        best[m] = value
    reference = best[min(k + 2, max_pieces)]
    target = best[min(k, max_pieces)]
    passed = target >= reference - SPARSITY_TOL * max(1.0, abs(reference))
    if not passed:
        logger.warning("Sparsity check failed: %s", best)
    return SparsityReport(n, k, u.kind, len(profiles), best, bool(passed))
