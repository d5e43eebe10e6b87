# Seeded property checks behind the verify command

from __future__ import annotations
from dataclasses import dataclass, field, replace
import itertools
import logging
import math
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats

from src.ranopt.affine_solver import SolverError, SolverOptions, solve_affine
from src.ranopt.baselines import (
    compare_point,
    dominance_violations,
    full_reuse_maxrsrp,
    network_mean_delay,
    throughput_knee,
)
from src.ranopt.channel import LinkGains, Neighborhoods, build_network
from src.ranopt.pursuit import PursuitOptions, verify_sparsity
from src.ranopt.rates import IDLE
from src.ranopt.scenario import NetworkScenario, ScenarioParams, generate_scenario
from src.ranopt.simulator import SimConfig, simulate
from src.ranopt.utility import UtilitySpec, delay_gradient, delay_utility

logger = logging.getLogger(__name__)

ORACLE_RATIO = 0.999
ORACLE_PASS_RATE = 0.95
CONVERGED_RATE = 0.99
GRADIENT_RTOL = 1e-4
MM1_RTOL = 0.05
CONFIDENCE = 0.95
TINY_SIDE_M = 150.0
MEDIUM_SIDE_M = 1330.0  # for 100 APs

# Check sizes: quick runs in seconds, full matches the acceptance runs
SUITE_SIZES: dict[str, dict[str, dict[str, Any]]] = {
    "quick": {
        "inner_monotonicity": {"instances": 20, "max_aps": 10, "max_devices": 20},
        "oracle_2x2": {"instances": 10},
        "sparsity": {"instances": 3},
        "delay_gradient": {"points": 100},
        "dominance_chain": {"scenarios": 1, "preset": "small", "sweep": (5.0, 20.0)},
        "mm1_single_link": {"load": 0.5, "packets": 20_000},
    },
    "full": {
        "inner_monotonicity": {"instances": 200, "max_aps": 50, "max_devices": 100},
        "oracle_2x2": {"instances": 50},
        "sparsity": {"instances": 20},
        "delay_gradient": {"points": 100},
        "dominance_chain": {
            "scenarios": 10,
            "preset": "medium",
            "sweep": (5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0),
        },
        "mm1_single_link": {"load": 0.8, "packets": 400_000},
        "conservatism": {"seeds": 5, "preset": "medium", "sweep": (5.0, 10.0, 15.0)},
    },
}


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


def random_network(
    seed: int, n_aps: int, n_devices: int, side_m: float | None = None, **overrides: Any
) -> tuple[NetworkScenario, LinkGains, Neighborhoods]:
    """Seeded network at the medium scenario's AP density unless side_m is given."""
    side = side_m or MEDIUM_SIDE_M * math.sqrt(n_aps / 100)
    params = ScenarioParams(
        n_aps=n_aps, n_devices=n_devices, area_side_m=side, seed=seed, **overrides
    )
    scenario = generate_scenario(params)
    gains, nb = build_network(scenario)
    return scenario, gains, nb


def grid_optimum(
    weights: np.ndarray, nb: Neighborhoods, gains: LinkGains, levels: int = 50
) -> float:
    """Exhaustive weighted sum rate: every z in K_i or idle, every p on a
    uniform grid over [0, P_max]."""
    n, k = nb.n_aps, nb.n_devices
    grid = np.linspace(0.0, nb.p_max, levels)
    options = []
    for candidates in nb.k_of_ap:
        options.append([(IDLE, 0.0)] + [(int(j), p) for j in candidates for p in grid[1:]])
    combos = list(itertools.product(*options))
    z = np.array([[zi for zi, _ in combo] for combo in combos], dtype=int)
    p = np.array([[pi for _, pi in combo] for combo in combos], dtype=float)

    # Idle maps onto a dummy device with no gain and unit noise
    padded_gain = np.c_[nb.masked(gains), np.zeros(n)]
    padded_noise = np.r_[nb.residual_noise, 1.0]
    padded_weight = np.r_[np.asarray(weights, dtype=float), 0.0]
    target = np.where(z == IDLE, k, z)
    # gain_to[c, l, i] = g_{l -> z_i} in combination c
    gain_to = padded_gain[:, target].transpose(1, 0, 2)
    received = np.einsum("cl,cli->ci", p, gain_to)
    own = p * np.take_along_axis(gain_to, np.arange(n)[None, None, :], axis=1)[:, 0, :]
    gamma = own / (padded_noise[target] + received - own)
    value = np.sum(padded_weight[target] * np.log2(1.0 + gamma), axis=1)
    return float(value.max())


def check_inner_monotonicity(
    instances: int = 200, max_aps: int = 50, max_devices: int = 100, seed: int = 0
) -> CheckResult:
    """Inner solver traces never decrease and nearly always converge."""
    rng = np.random.default_rng(seed)
    failures, converged, iterations = [], 0, []
    for t in range(instances):
        n = int(rng.integers(2, max_aps + 1))
        k = int(rng.integers(2, max_devices + 1))
        _, gains, nb = random_network(seed * 100_003 + t, n, k)
        weights = rng.uniform(0.1, 1.0, k)
        opts = SolverOptions(init="random" if t % 2 else "greedy", seed=t)
        try:
            report = solve_affine(weights, nb, gains, opts=opts)
        except SolverError as e:
            failures.append({"instance": t, "error": str(e)})
            continue
        converged += report.converged
        iterations.append(report.iterations)
    rate = converged / instances
    return CheckResult(
        "inner_monotonicity",
        not failures and rate >= CONVERGED_RATE,
        {
            "instances": instances,
            "failures": failures,
            "converged_rate": rate,
            "mean_iterations": float(np.mean(iterations)) if iterations else math.nan,
            "max_iterations": int(max(iterations, default=0)),
        },
    )


def check_oracle_2x2(instances: int = 50, levels: int = 50, seed: int = 0) -> CheckResult:
    """The inner solver against exhaustive search on 2-AP / 2-device networks."""
    rng = np.random.default_rng(seed)
    hits, ratios = 0, []
    for t in range(instances):
        _, gains, nb = random_network(seed * 100_003 + t, 2, 2, side_m=TINY_SIDE_M)
        weights = rng.uniform(0.5, 1.5, 2)
        best = grid_optimum(weights, nb, gains, levels)
        got = solve_affine(weights, nb, gains).objective
        ratio = got / best if best > 0 else 1.0
        ratios.append(ratio)
        hits += ratio >= ORACLE_RATIO
    rate = hits / instances
    return CheckResult(
        "oracle_2x2",
        rate >= ORACLE_PASS_RATE,
        {"instances": instances, "pass_rate": rate, "worst_ratio": float(min(ratios))},
    )


def tiny_delay_utility(
    scenario: NetworkScenario, nb: Neighborhoods, gains: LinkGains, load: float = 0.3
) -> UtilitySpec:
    """Delay utility loading each device to `load` of its best solo link."""
    solo = nb.p_max * nb.masked(gains).max(axis=0) / nb.residual_noise
    capacity = scenario.bandwidth_hz * np.log2(1.0 + solo) / scenario.mean_packet_bits
    arrival = np.where(capacity > 0, load * capacity, 1.0)
    return UtilitySpec.delay(arrival, scenario.mean_packet_bits)


def check_sparsity(instances: int = 20, levels: int = 3, seed: int = 0) -> CheckResult:
    """k pieces do as well as k + 2 on gridded tiny networks, for the delay
    and a positive weighted sum rate utility."""
    rng = np.random.default_rng(seed)
    reports = []
    for t in range(instances):
        scenario, gains, nb = random_network(seed * 100_003 + t, 2, 2, side_m=TINY_SIDE_M)
        grid = np.linspace(0.0, nb.p_max, levels)
        for u in (
            tiny_delay_utility(scenario, nb, gains),
            UtilitySpec.weighted(rng.uniform(0.5, 1.5, 2)),
        ):
            reports.append(verify_sparsity(u, nb, gains, scenario.bandwidth_hz, grid))
    return CheckResult(
        "sparsity",
        all(r.passed for r in reports),
        {"instances": instances, "reports": [r.as_dict() for r in reports]},
    )


def check_delay_gradient(points: int = 100, seed: int = 0) -> CheckResult:
    """delay_gradient against central differences at interior points."""
    rng = np.random.default_rng(seed)
    mean_bits = 5e5
    worst = 0.0
    for _ in range(points):
        k = int(rng.integers(1, 8))
        arrival = rng.uniform(1.0, 20.0, k)
        margin = arrival * rng.uniform(1.0, 4.0, k)
        rates = (arrival + margin) * mean_bits
        grad = delay_gradient(rates, arrival, mean_bits)
        for j in range(k):
            h = 1e-4 * margin[j] * mean_bits
            step = np.zeros(k)
            step[j] = h
            numeric = (
                delay_utility(rates + step, arrival, mean_bits)
                - delay_utility(rates - step, arrival, mean_bits)
            ) / (2 * h)
            worst = max(worst, abs(numeric - grad[j]) / abs(grad[j]))
    return CheckResult(
        "delay_gradient", worst <= GRADIENT_RTOL, {"points": points, "worst_rel_error": worst}
    )


def check_dominance_chain(
    scenarios: int = 1,
    preset: str = "small",
    sweep: Sequence[float] = (5.0, 20.0),
    seed: int = 0,
    opts: PursuitOptions | None = None,
) -> CheckResult:
    """Per instance and traffic point: proposed >= pattern, optassoc >= maxrsrp,
    and the proposed knee is at least every baseline's."""
    violations = []
    knees_ok = True
    knees = []
    for s in range(scenarios):
        scenario = generate_scenario(ScenarioParams.preset(preset, seed=seed + s))
        gains, nb = build_network(scenario)
        delays: dict[str, list[float]] = {}
        for traffic in sweep:
            loaded = scenario.with_traffic(traffic)
            u = UtilitySpec.delay(loaded.arrival_rates, loaded.mean_packet_bits)
            results = compare_point(u, nb, gains, scenario.bandwidth_hz, opts=opts)
            utilities = {name: u.value(run.plan.rates) for name, run in results.items()}
            for broken in dominance_violations(utilities):
                violations.append({"scenario": s, "traffic": traffic, "broken": broken})
            for name, run in results.items():
                delays.setdefault(name, []).append(network_mean_delay(run.plan.rates, u))
        knee = {name: throughput_knee(sweep, d) for name, d in delays.items()}
        knees.append(knee)
        proposed = knee["proposed"]
        for name, value in knee.items():
            if not math.isnan(value) and (math.isnan(proposed) or proposed < value):
                knees_ok = False
    return CheckResult(
        "dominance_chain",
        not violations and knees_ok,
        {"scenarios": scenarios, "violations": violations, "knees": knees},
    )


def single_link(seed: int = 0) -> tuple[NetworkScenario, LinkGains, Neighborhoods]:
    """One AP and one device a few meters apart in line of sight."""
    return random_network(seed, 1, 1, side_m=10.0, los_mode="los")


def check_mm1_single_link(load: float = 0.8, packets: int = 100_000, seed: int = 0) -> CheckResult:
    """Simulated mean delay of a lone link against 1 / (μ - a)."""
    scenario, gains, nb = single_link(seed)
    plan = full_reuse_maxrsrp(nb, gains, scenario.bandwidth_hz)
    mu = float(plan.rates[0]) / scenario.mean_packet_bits
    loaded = scenario.with_traffic(load * mu)
    warmup = 0.1
    cfg = SimConfig(
        plan, loaded, nb, gains, max_packets=int(packets / (1 - warmup)) + 1, seed=seed
    )
    outcome = simulate(cfg)
    expected = 1.0 / (mu - load * mu)
    error = abs(outcome.network_mean_delay - expected) / expected
    return CheckResult(
        "mm1_single_link",
        error <= MM1_RTOL,
        {
            "load": load,
            "packets": int(outcome.packets.sum()),
            "simulated": outcome.network_mean_delay,
            "analytic": expected,
            "rel_error": error,
        },
    )


def conservative(
    simulated: Sequence[float], analytic: float, confidence: float = CONFIDENCE
) -> bool:
    """False only if the simulated mean exceeds the analytic delay with the
    given one-sided confidence (t-interval across seeds)."""
    samples = np.asarray(simulated, dtype=float)
    mean = float(samples.mean())
    if len(samples) < 2:
        return mean <= analytic
    half_width = stats.t.ppf(confidence, len(samples) - 1) * stats.sem(samples)
    return mean - half_width <= analytic


def check_conservatism(
    seeds: int = 5,
    preset: str = "small",
    sweep: Sequence[float] = (5.0,),
    horizon_s: float = 20.0,
    seed: int = 0,
    opts: PursuitOptions | None = None,
) -> CheckResult:
    """Simulated network mean delay of the proposed plan stays at or below the
    analytic one at every stable traffic point."""
    scenario = generate_scenario(ScenarioParams.preset(preset, seed=seed))
    gains, nb = build_network(scenario)
    points = []
    for traffic in sweep:
        loaded = scenario.with_traffic(traffic)
        u = UtilitySpec.delay(loaded.arrival_rates, loaded.mean_packet_bits)
        run = compare_point(u, nb, gains, scenario.bandwidth_hz, ("proposed",), opts)
        plan = run["proposed"].plan
        analytic = network_mean_delay(plan.rates, u)
        if not math.isfinite(analytic):
            continue
        simulated = [
            simulate(SimConfig(plan, loaded, nb, gains, horizon_s=horizon_s, seed=s))
            .network_mean_delay
            for s in range(seeds)
        ]
        points.append(
            {
                "traffic": traffic,
                "analytic": analytic,
                "simulated": simulated,
                "passed": conservative(simulated, analytic),
            }
        )
    return CheckResult(
        "conservatism", all(p["passed"] for p in points), {"points": points}
    )


CHECKS: dict[str, Callable[..., CheckResult]] = {
    "inner_monotonicity": check_inner_monotonicity,
    "oracle_2x2": check_oracle_2x2,
    "sparsity": check_sparsity,
    "delay_gradient": check_delay_gradient,
    "dominance_chain": check_dominance_chain,
    "mm1_single_link": check_mm1_single_link,
    "conservatism": check_conservatism,
}


def run_suite(
    size: str = "quick", seed: int = 0, opts: PursuitOptions | None = None
) -> list[CheckResult]:
    """Run every check configured for `size`; a crash counts as a failure."""
    if size not in SUITE_SIZES:
        raise ValueError(f"Unknown suite size {size!r}, choose from {sorted(SUITE_SIZES)}")
    results = []
    for name, kwargs in SUITE_SIZES[size].items():
        kwargs = {**kwargs, "seed": seed}
        if name in ("dominance_chain", "conservatism") and opts is not None:
            kwargs["opts"] = replace(opts, seed=seed)
        logger.info("Running check %s", name)
        try:
            result = CHECKS[name](**kwargs)
        except Exception as e:  # noqa: BLE001
            logger.exception("Check %s crashed", name)
            result = CheckResult(name, False, {"error": f"{type(e).__name__}: {e}"})
        logger.info("Check %s %s", name, "passed" if result.passed else "FAILED")
        results.append(result)
    return results
