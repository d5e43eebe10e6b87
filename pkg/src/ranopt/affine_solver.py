# Joint power control and user association for a weighted sum rate
# (Lagrangian dual + quadratic transform, closed-form cyclic updates)

from __future__ import annotations
from dataclasses import dataclass, field
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from src.ranopt.channel import LinkGains, Neighborhoods
from src.ranopt.rates import IDLE, PowerProfile, link_gammas

logger = logging.getLogger(__name__)

# Power handling: closed-form update, frozen at P_max, or on/off
POWER_MODES = ("optimize", "fixed", "binary")
INIT_MODES = ("greedy", "random")

_TINY = 1e-300


class SolverError(RuntimeError):
    """Base class for failures inside the affine solver."""


class NumericalFailure(SolverError):
    """A non-finite value appeared during an update."""

    def __init__(self, iteration: int, what: str) -> None:
        super().__init__(f"Non-finite {what} at iteration {iteration}")
        self.iteration = iteration


class MonotonicityError(SolverError):
    """The objective decreased across a full update cycle."""

    def __init__(self, iteration: int, previous: float, current: float) -> None:
        super().__init__(
            f"Objective decreased at iteration {iteration}: {previous!r} -> {current!r}"
        )
        self.iteration = iteration
        self.previous = previous
        self.current = current


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-6
    max_iters: int = 500
    power_mode: str = "optimize"
    init: str = "greedy"
    seed: int = 0
    check_monotone: bool = True
    # A cycle may lower the objective by at most
    # monotone_slack + monotone_rel_slack * |objective|; the relative part
    # absorbs rounding once the objective is far above 1
    monotone_slack: float = 1e-9
    monotone_rel_slack: float = 1e-12

    def __post_init__(self) -> None:
        if self.power_mode not in POWER_MODES:
            raise ValueError(f"power_mode must be one of {POWER_MODES}")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}")
        if self.tol <= 0 or self.max_iters < 1:
            raise ValueError("tol must be positive and max_iters at least 1")
        if self.monotone_slack < 0 or self.monotone_rel_slack < 0:
            raise ValueError("Monotonicity slacks must be non-negative.")


@dataclass
class SolverState:
    """Iterates of the transformed problem plus the network they live on.
    `weights` are in nats: c_j / ln 2 for a utility per bit/s/Hz."""

    z: np.ndarray
    p: np.ndarray
    gamma: np.ndarray
    y: np.ndarray
    weights: np.ndarray
    masked_gains: np.ndarray = field(repr=False)
    noise: np.ndarray = field(repr=False)
    p_max: float = 0.0
    pair_ap: np.ndarray = field(default=None, repr=False)
    pair_dev: np.ndarray = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.pair_ap is None or self.pair_dev is None:
            self.pair_ap, self.pair_dev = np.nonzero(self.masked_gains > 0)

    @classmethod
    def start(
        cls, weights: np.ndarray, nb: Neighborhoods, gains: LinkGains, init: PowerProfile
    ) -> SolverState:
        """State at profile `init` with weights per bit/s/Hz."""
        n = nb.n_aps
        return cls(
            z=init.served.copy(),
            p=init.psd.copy(),
            gamma=np.zeros(n),
            y=np.zeros(n),
            weights=np.asarray(weights, dtype=float) / math.log(2.0),
            masked_gains=nb.masked(gains),
            noise=nb.residual_noise,
            p_max=nb.p_max,
            pair_ap=nb.pairs[0],
            pair_dev=nb.pairs[1],
        )

    @property
    def serving(self) -> np.ndarray:
        return self.z != IDLE

    def profile(self) -> PowerProfile:
        return PowerProfile(self.z, self.p)

    def received(self) -> np.ndarray:
        """n_j + sum_{l in N_j} p_l g_{l->j} for every device."""
        power = np.where(self.serving, self.p, 0.0)
        return self.noise + self.masked_gains.T @ power

    def link_gain(self) -> np.ndarray:
        """g_{i->z_i}, zero for idle APs."""
        gain = np.zeros(len(self.z))
        aps = np.flatnonzero(self.serving)
        gain[aps] = self.masked_gains[aps, self.z[aps]]
        return gain

    def served_weight(self) -> np.ndarray:
        """c_{z_i}, zero for idle APs."""
        return np.where(self.serving, self.weights[np.maximum(self.z, 0)], 0.0)


@dataclass
class AffineSolveReport:
    profile: PowerProfile
    objective_trace: list[float]
    active_trace: list[int]
    iterations: int
    converged: bool

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]

    def to_csv(self, csv_path: Path) -> None:
        """Per-iteration trace: iteration, objective, active APs."""
        pd.DataFrame(
            {
                "iter": range(len(self.objective_trace)),
                "objective": self.objective_trace,
                "active_aps": self.active_trace,
            }
        ).to_csv(csv_path, index=False, float_format="%.12e")


def objective(state: SolverState) -> float:
    """Weighted sum rate of the current (z, p), in utility units."""
    gamma = link_gammas(state.z, state.p, state.masked_gains, state.noise)
    return float(np.sum(state.served_weight() * np.log1p(gamma)))


def update_gamma(state: SolverState) -> np.ndarray:
    """Optimal γ is the SINR of each AP towards its device."""
    return link_gammas(state.z, state.p, state.masked_gains, state.noise)


def update_y(state: SolverState) -> np.ndarray:
    """y_i = sqrt(c (1+γ) p g) / total received PSD at z_i."""
    y = np.zeros(len(state.z))
    aps = np.flatnonzero(state.serving)
    devices = state.z[aps]
    numerator = np.sqrt(
        state.weights[devices]
        * (1.0 + state.gamma[aps])
        * state.p[aps]
        * state.masked_gains[aps, devices]
    )
    y[aps] = numerator / state.received()[devices]
    return y


def update_p(state: SolverState) -> np.ndarray:
    """Closed-form PSD clipped at P_max. The denominator is AP i's
    interference footprint sum over serving APs l with i in N_{z_l}."""
    serving = state.serving
    y_sq = np.where(serving, state.y**2, 0.0)
    per_device = np.bincount(
        state.z[serving], weights=y_sq[serving], minlength=state.masked_gains.shape[1]
    )
    footprint = state.masked_gains @ per_device
    numerator = state.served_weight() * (1.0 + state.gamma) * state.link_gain() * y_sq
    p = np.zeros(len(state.z))
    positive = serving & (numerator > 0)
    with np.errstate(divide="ignore"):
        unclipped = np.where(
            footprint[positive] > 0,
            numerator[positive] / np.maximum(footprint[positive], _TINY) ** 2,
            np.inf,
        )
    p[positive] = np.minimum(state.p_max, unclipped)
    return p


def update_z(state: SolverState, allow_idle: bool = True) -> np.ndarray:
    """Each AP picks the candidate with the largest contribution,
    lowest index on ties; idle unless that contribution is positive."""
    z = np.full(len(state.z), IDLE)
    if len(state.pair_ap) == 0:
        return z
    ap, dev = state.pair_ap, state.pair_dev
    c = state.weights[dev]
    gamma, y, p = state.gamma[ap], state.y[ap], state.p[ap]
    phi = (
        c * (np.log1p(gamma) - gamma)
        + 2.0 * y * np.sqrt(c * (1.0 + gamma) * p * state.masked_gains[ap, dev])
        - y**2 * state.received()[dev]
    )
    starts = np.flatnonzero(np.r_[True, ap[1:] != ap[:-1]])
    best = np.maximum.reduceat(phi, starts)
    counts = np.diff(np.r_[starts, len(ap)])
    hits = np.flatnonzero(phi == np.repeat(best, counts))
    _, first = np.unique(ap[hits], return_index=True)
    winners = hits[first]
    chosen = best > 0 if allow_idle else np.ones(len(best), dtype=bool)
    z[ap[starts][chosen]] = dev[winners][chosen]
    return z


def settle_power(
    z: np.ndarray, p: np.ndarray, p_max: float, power_mode: str
) -> tuple[np.ndarray, np.ndarray]:
    """Idle APs transmit nothing. Frozen and binary modes put serving APs at
    P_max; with optimized powers an AP left at zero PSD goes idle."""
    if power_mode == "optimize":
        z = np.where(p > 0, z, IDLE)
        return z, np.where(z == IDLE, 0.0, p)
    return z, np.where(z == IDLE, 0.0, p_max)


def random_profile(
    nb: Neighborhoods, rng: np.random.Generator, power_mode: str = "optimize"
) -> PowerProfile:
    """Seeded random profile respecting the power mode: z_i uniform over K_i
    (plus idle unless powers are frozen), p_i uniform over [0, P_max] when
    powers are optimized and P_max otherwise."""
    served = np.full(nb.n_aps, IDLE)
    psd = np.zeros(nb.n_aps)
    for i, candidates in enumerate(nb.k_of_ap):
        if power_mode == "fixed" and len(candidates):
            options = candidates
        else:
            options = np.r_[IDLE, candidates]
        served[i] = rng.choice(options)
        psd[i] = rng.uniform(0.0, nb.p_max) if power_mode == "optimize" else nb.p_max
    return PowerProfile(served, psd)


def initial_profile(
    weights: np.ndarray, nb: Neighborhoods, gains: LinkGains, opts: SolverOptions
) -> PowerProfile:
    """Greedy start (best c_j g_ij per AP at P_max) or a seeded random one."""
    if opts.init == "random":
        return random_profile(nb, np.random.default_rng(opts.seed), opts.power_mode)
    served = np.full(nb.n_aps, IDLE)
    psd = np.full(nb.n_aps, nb.p_max)
    score = nb.masked(gains) * np.asarray(weights, dtype=float)[None, :]
    has_candidates = nb.member.any(axis=1)
    served[has_candidates] = np.argmax(
        np.where(nb.member, score, -np.inf)[has_candidates], axis=1
    )
    return PowerProfile(served, psd)


def _finite(values: np.ndarray, iteration: int, name: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NumericalFailure(iteration, name)
    return values


def solve_affine(
    weights: np.ndarray,
    nb: Neighborhoods,
    gains: LinkGains,
    init: PowerProfile | None = None,
    opts: SolverOptions | None = None,
) -> AffineSolveReport:
    """Inner solver: cycle the γ, y, p, z updates until the relative change of
    the weighted sum rate falls below tol. The objective never decreases;
    a decrease beyond slack raises MonotonicityError."""
    opts = opts or SolverOptions()
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (nb.n_devices,) or np.any(weights < 0):
        raise ValueError("Weights must be one non-negative value per device.")
    init = init or initial_profile(weights, nb, gains, opts)
    init.check(nb)
    state = SolverState.start(weights, nb, gains, init)
    state.z, state.p = settle_power(state.z, state.p, state.p_max, opts.power_mode)

    previous = objective(state)
    trace = [previous]
    active = [int(state.serving.sum())]
    converged = False
    iteration = 0
    for iteration in range(1, opts.max_iters + 1):
        state.gamma = _finite(update_gamma(state), iteration, "gamma")
        state.y = _finite(update_y(state), iteration, "y")
        if opts.power_mode == "optimize":
            state.p = np.clip(_finite(update_p(state), iteration, "p"), 0.0, state.p_max)
        state.z = update_z(state, allow_idle=opts.power_mode != "fixed")
        state.z, state.p = settle_power(state.z, state.p, state.p_max, opts.power_mode)
        current = objective(state)
        if not math.isfinite(current):
            raise NumericalFailure(iteration, "objective")
        slack = opts.monotone_slack + opts.monotone_rel_slack * abs(previous)
        if opts.check_monotone and current < previous - slack:
            raise MonotonicityError(iteration, previous, current)
        trace.append(current)
        active.append(int(state.serving.sum()))
        logger.debug(
            "Inner iteration %d: objective %.6e, %d active APs",
            iteration,
            current,
            active[-1],
        )
        if abs(current - previous) <= opts.tol * max(abs(previous), _TINY):
            converged = True
            break
        previous = current

    if not converged:
        logger.info("Inner solver stopped after %d iterations without converging", iteration)
    return AffineSolveReport(
        profile=state.profile(),
        objective_trace=trace,
        active_trace=active,
        iterations=iteration,
        converged=converged,
    )
