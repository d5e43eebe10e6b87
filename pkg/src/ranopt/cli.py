# Command line pipeline: generate scenarios, optimize and compare the schemes
# over a traffic sweep, simulate the plans, run the property checks, plot.

from __future__ import annotations
import argparse
from dataclasses import asdict, dataclass, replace
import json
import logging
import math
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from src.ranopt.affine_solver import SolverOptions
from src.ranopt.baselines import (
    SCHEMES,
    SchemeRun,
    compare_point,
    dominance_violations,
    network_mean_delay,
    plan_report,
    throughput_knee,
)
from src.ranopt.channel import LinkGains, Neighborhoods, build_network
from src.ranopt.logs import configure_logging
from src.ranopt.plotting import plot_delay_curves, plot_deployment
from src.ranopt.properties import SUITE_SIZES, conservative, run_suite
from src.ranopt.pursuit import PursuitOptions
from src.ranopt.rates import AllocationPlan
from src.ranopt.scenario import (
    PRESETS,
    NetworkScenario,
    ScenarioParams,
    generate_scenario,
    load_scenario,
    save_scenario,
)
from src.ranopt.simulator import DEFAULT_WARMUP, SimConfig, SimOutcome, simulate
from src.ranopt.utility import UtilitySpec

logger = logging.getLogger(__name__)

DEFAULT_OUT = Path("results")
DEFAULT_SWEEP = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0)
DEFAULT_HORIZON_S = 30.0
FLOAT_FORMAT = "%.12e"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


class RunError(RuntimeError):
    """A scheme failed on one sweep point."""

    def __init__(self, scheme: str, traffic: float, cause: str) -> None:
        super().__init__(f"{scheme} at traffic {traffic:g} packets/s: {cause}")
        self.scheme = scheme
        self.traffic = traffic
        self.cause = cause

    def __reduce__(self):
        return RunError, (self.scheme, self.traffic, self.cause)


@dataclass(frozen=True)
class RunManifest:
    """Everything one pipeline run depends on. Written next to the results so
    a run can be repeated from its output directory."""

    scenario: Path | None = None
    schemes: tuple[str, ...] = SCHEMES
    sweep: tuple[float, ...] = DEFAULT_SWEEP
    out: Path = DEFAULT_OUT
    seeds: tuple[int, ...] = (0,)
    tol_inner: float = 1e-6
    tol_outer: float = 1e-5
    max_profiles: int | None = None
    jobs: int = 1
    horizon_s: float | None = None
    max_packets: int | None = None
    warmup: float = DEFAULT_WARMUP
    power_price: float = 0.0
    maintenance_cost: float = 0.0
    suite: str = "quick"

    def __post_init__(self) -> None:
        if not self.sweep or any(x <= 0 or not math.isfinite(x) for x in self.sweep):
            raise ValueError("Sweep values must be positive.")
        if list(self.sweep) != sorted(self.sweep):
            raise ValueError("Sweep values must be sorted.")
        unknown = set(self.schemes) - set(SCHEMES)
        if not self.schemes or unknown:
            raise ValueError(f"Schemes must be chosen from {SCHEMES}, got {self.schemes}")
        if not self.seeds:
            raise ValueError("At least one seed is required.")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")
        if self.tol_inner <= 0 or self.tol_outer <= 0:
            raise ValueError("Tolerances must be positive.")
        if self.horizon_s is not None and self.max_packets is not None:
            raise ValueError("Give at most one of horizon_s and max_packets.")
        if self.suite not in SUITE_SIZES:
            raise ValueError(f"suite must be one of {sorted(SUITE_SIZES)}")

    @property
    def seed(self) -> int:
        """Seed of the optimization runs; simulations use every seed."""
        return self.seeds[0]

    def pursuit_options(self) -> PursuitOptions:
        return PursuitOptions(
            max_profiles=self.max_profiles,
            tol_outer=self.tol_outer,
            seed=self.seed,
            solver=SolverOptions(tol=self.tol_inner, seed=self.seed),
        )

    def sim_bounds(self) -> dict[str, float | int]:
        if self.max_packets is not None:
            return {"max_packets": self.max_packets}
        return {"horizon_s": self.horizon_s or DEFAULT_HORIZON_S}

    def require_scenario(self) -> NetworkScenario:
        if self.scenario is None:
            raise ValueError("A scenario file is required (--scenario or manifest).")
        return load_scenario(self.scenario)

    def as_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["scenario"] = None if self.scenario is None else str(self.scenario)
        data["out"] = str(self.out)
        data["schemes"] = list(self.schemes)
        data["sweep"] = list(self.sweep)
        data["seeds"] = list(self.seeds)
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunManifest:
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"Unknown manifest key(s) {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("scenario", "out"):
            if kwargs.get(key) is not None:
                kwargs[key] = Path(kwargs[key])
        if "schemes" in kwargs:
            kwargs["schemes"] = tuple(kwargs["schemes"])
        if "sweep" in kwargs:
            kwargs["sweep"] = tuple(float(x) for x in kwargs["sweep"])
        if "seeds" in kwargs:
            kwargs["seeds"] = tuple(int(s) for s in kwargs["seeds"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, file_path: Path) -> RunManifest:
        with Path(file_path).open("r") as f:
            return cls.from_dict(json.load(f))

    def to_json(self, json_path: Path) -> None:
        with json_path.open("w") as f:
            json.dump(self.as_dict(), f, indent=4)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> RunManifest:
        """Manifest file (if any) with the given flags on top."""
        base = cls.from_json(args.manifest) if args.manifest else cls()
        overrides = {}
        for key in cls.__dataclass_fields__:
            value = getattr(args, key, None)
            if value is not None:
                overrides[key] = value
        for key in ("schemes", "sweep", "seeds"):
            if key in overrides:
                overrides[key] = tuple(overrides[key])
        if "sweep" in overrides:
            overrides["sweep"] = tuple(sorted(overrides["sweep"]))
        return replace(base, **overrides)


@dataclass(frozen=True, eq=False)
class PointTask:
    """One sweep point, self-contained so it can be shipped to a worker."""

    manifest: RunManifest
    scenario: NetworkScenario
    gains: LinkGains
    nb: Neighborhoods
    traffic: float

    def utility(self) -> tuple[NetworkScenario, UtilitySpec]:
        loaded = self.scenario.with_traffic(self.traffic)
        u = UtilitySpec.delay(
            loaded.arrival_rates,
            loaded.mean_packet_bits,
            power_price=self.manifest.power_price,
            maintenance_cost=self.manifest.maintenance_cost,
        )
        return loaded, u


def traffic_tag(traffic: float) -> str:
    return f"t{traffic:g}"


def plan_path(out: Path, scheme: str, traffic: float) -> Path:
    return out / f"plan_{scheme}_{traffic_tag(traffic)}.json"


def solve_point(task: PointTask) -> dict[str, SchemeRun]:
    """Run every scheme of the manifest on one sweep point."""
    _, u = task.utility()
    logger.info("Optimizing sweep point %g packets/s", task.traffic)
    try:
        return compare_point(
            u,
            task.nb,
            task.gains,
            task.scenario.bandwidth_hz,
            task.manifest.schemes,
            task.manifest.pursuit_options(),
        )
    except Exception as e:
        scheme = ",".join(task.manifest.schemes)
        raise RunError(scheme, task.traffic, f"{type(e).__name__}: {e}") from e


def simulate_point(task: PointTask) -> dict[str, tuple[AllocationPlan, list[SimOutcome]]]:
    """Simulate each scheme's plan for every seed, reusing saved plans."""
    loaded, _ = task.utility()
    plans: dict[str, AllocationPlan] = {}
    missing = []
    for scheme in task.manifest.schemes:
        path = plan_path(task.manifest.out, scheme, task.traffic)
        if path.exists():
            plans[scheme] = AllocationPlan.from_json(path)
        else:
            missing.append(scheme)
    if missing:
        logger.info("No saved plans for %s, optimizing first", missing)
        fresh = solve_point(replace(task, manifest=replace(task.manifest, schemes=SCHEMES)))
        plans.update({scheme: fresh[scheme].plan for scheme in missing})
    outcomes: dict[str, tuple[AllocationPlan, list[SimOutcome]]] = {}
    for scheme in task.manifest.schemes:
        runs = []
        for seed in task.manifest.seeds:
            cfg = SimConfig(
                plans[scheme],
                loaded,
                task.nb,
                task.gains,
                warmup=task.manifest.warmup,
                seed=seed,
                **task.manifest.sim_bounds(),
            )
            try:
                runs.append(simulate(cfg))
            except Exception as e:
                raise RunError(scheme, task.traffic, f"{type(e).__name__}: {e}") from e
        outcomes[scheme] = plans[scheme], runs
    return outcomes


def _map(function, tasks: Sequence[PointTask], jobs: int) -> list:
    """Map over sweep points, in order, with up to `jobs` worker processes."""
    if jobs == 1 or len(tasks) < 2:
        return [function(task) for task in tasks]
    with Pool(processes=min(jobs, len(tasks))) as pool:
        return pool.map(function, tasks)


def _tasks(manifest: RunManifest) -> list[PointTask]:
    scenario = manifest.require_scenario()
    gains, nb = build_network(scenario)
    return [PointTask(manifest, scenario, gains, nb, traffic) for traffic in manifest.sweep]


def _write_csv(frame: pd.DataFrame, csv_path: Path) -> None:
    frame.to_csv(csv_path, index=False, float_format=FLOAT_FORMAT)
    logger.info("Wrote %s", csv_path)


def _prepare_out(manifest: RunManifest) -> Path:
    manifest.out.mkdir(parents=True, exist_ok=True)
    manifest.to_json(manifest.out / "manifest.json")
    return manifest.out


def cmd_generate(args: argparse.Namespace) -> int:
    overrides: dict[str, Any] = {"seed": args.seed}
    for key, attr in (("n", "n_aps"), ("k", "n_devices"), ("side", "area_side_m")):
        if getattr(args, key) is not None:
            overrides[attr] = getattr(args, key)
    if args.traffic is not None:
        overrides["arrival_rate"] = args.traffic
    params = ScenarioParams.preset(args.preset, **overrides)
    scenario = generate_scenario(params)
    if args.out is None:
        path = scenario.to_json()
    else:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_scenario(scenario, path)
    print(f"{scenario} -> {path}")
    return EXIT_OK


def cmd_optimize(manifest: RunManifest) -> int:
    """Plans, pursuit traces and the per-run iteration counts of every scheme."""
    tasks = _tasks(manifest)
    out = _prepare_out(manifest)
    results = _map(solve_point, tasks, manifest.jobs)
    rows, timings = [], []
    for task, runs in zip(tasks, results):
        _, u = task.utility()
        for scheme, run in runs.items():
            run.plan.to_json(plan_path(out, scheme, task.traffic))
            row = {"traffic": task.traffic, **plan_report(run.plan, u)}
            if run.state is not None:
                run.state.to_csv(out / f"trace_{scheme}_{traffic_tag(task.traffic)}.csv")
                inner = np.array(run.state.inner_iterations[1:] or [0])
                row.update(
                    outer_iterations=run.state.outer_iterations,
                    profiles=len(run.state.profiles),
                    inner_mean_iterations=float(inner.mean()),
                    inner_max_iterations=int(inner.max()),
                )
            else:
                row.update(
                    outer_iterations=0,
                    profiles=len(run.plan.profiles),
                    inner_mean_iterations=0.0,
                    inner_max_iterations=0,
                )
            rows.append(row)
            timings.append({"traffic": task.traffic, "scheme": scheme, "runtime_s": run.runtime_s})
    _write_csv(pd.DataFrame(rows), out / "optimize_summary.csv")
    _write_csv(pd.DataFrame(timings), out / "timings.csv")
    return EXIT_OK


def cmd_compare(manifest: RunManifest) -> int:
    """Analytic network mean delay per scheme and sweep point, with the
    dominance chain checked on every point."""
    tasks = _tasks(manifest)
    out = _prepare_out(manifest)
    results = _map(solve_point, tasks, manifest.jobs)
    rows = []
    delays: dict[str, list[float]] = {scheme: [] for scheme in manifest.schemes}
    for task, runs in zip(tasks, results):
        _, u = task.utility()
        utilities = {scheme: u.value(run.plan.rates) for scheme, run in runs.items()}
        broken = dominance_violations(utilities)
        for scheme, run in runs.items():
            delay = network_mean_delay(run.plan.rates, u)
            delays[scheme].append(delay)
            rows.append(
                {
                    "traffic": task.traffic,
                    "scheme": scheme,
                    "utility": utilities[scheme],
                    "mean_delay_s": delay,
                    "feasible": math.isfinite(delay),
                    "active_segments": run.plan.active_segments,
                    "dominance_ok": not any(scheme in link.split("<") for link in broken),
                }
            )
    _write_csv(pd.DataFrame(rows), out / "compare.csv")
    knees = [
        {"scheme": scheme, "knee_traffic": throughput_knee(manifest.sweep, d)}
        for scheme, d in delays.items()
    ]
    _write_csv(pd.DataFrame(knees), out / "knee.csv")
    if not all(row["dominance_ok"] for row in rows):
        logger.error("Dominance chain broken on some sweep points, see compare.csv")
        return EXIT_FAILED
    return EXIT_OK


def cmd_simulate(manifest: RunManifest) -> int:
    """Per-device outcome CSVs for every scheme, point and seed, a summary
    against the M/M/1 prediction and the conservatism test across seeds."""
    tasks = _tasks(manifest)
    out = _prepare_out(manifest)
    results = _map(simulate_point, tasks, manifest.jobs)
    rows, verdicts = [], []
    for task, outcomes in zip(tasks, results):
        _, u = task.utility()
        for scheme, (plan, runs) in outcomes.items():
            path = plan_path(out, scheme, task.traffic)
            if not path.exists():
                plan.to_json(path)
            analytic = network_mean_delay(plan.rates, u)
            for seed, outcome in zip(manifest.seeds, runs):
                name = f"sim_{scheme}_{traffic_tag(task.traffic)}_seed{seed}.csv"
                outcome.to_csv(out / name)
                rows.append(
                    {
                        "traffic": task.traffic,
                        "scheme": scheme,
                        "seed": seed,
                        "simulated_mean_delay_s": outcome.network_mean_delay,
                        "analytic_mean_delay_s": analytic,
                        "packets": int(outcome.packets.sum()),
                        "unstable_devices": int(outcome.unstable.sum()),
                    }
                )
            simulated = [r.network_mean_delay for r in runs]
            if math.isfinite(analytic) and all(math.isfinite(s) for s in simulated):
                verdicts.append(
                    {
                        "traffic": task.traffic,
                        "scheme": scheme,
                        "analytic_mean_delay_s": analytic,
                        "simulated_mean_delay_s": float(np.mean(simulated)),
                        "conservative": conservative(simulated, analytic),
                    }
                )
    _write_csv(pd.DataFrame(rows), out / "sim_summary.csv")
    columns = [
        "traffic",
        "scheme",
        "analytic_mean_delay_s",
        "simulated_mean_delay_s",
        "conservative",
    ]
    _write_csv(pd.DataFrame(verdicts, columns=columns), out / "sim_conservatism.csv")
    return EXIT_OK


def cmd_verify(manifest: RunManifest) -> int:
    """Property suite; nonzero exit when any check fails."""
    out = _prepare_out(manifest)
    results = run_suite(manifest.suite, manifest.seed, manifest.pursuit_options())
    passed = all(r.passed for r in results)
    report = {
        "suite": manifest.suite,
        "seed": manifest.seed,
        "passed": passed,
        "checks": [r.as_dict() for r in results],
    }
    report_path = out / "verify_report.json"
    with report_path.open("w") as f:
        json.dump(report, f, indent=4, default=_json_default)
    for r in results:
        print(f"{r.name:20s} {'ok' if r.passed else 'FAILED'}")
    logger.info("Wrote %s", report_path)
    return EXIT_OK if passed else EXIT_FAILED


def cmd_plot(manifest: RunManifest) -> int:
    """PNG views of whatever compare/simulate wrote into the output directory."""
    out = manifest.out
    compare_csv = out / "compare.csv"
    if compare_csv.exists():
        simulated = out / "sim_summary.csv"
        plot_delay_curves(
            compare_csv, out / "delay_vs_traffic.png", simulated if simulated.exists() else None
        )
    else:
        logger.warning("No %s, run compare first", compare_csv)
    if manifest.scenario is not None:
        scenario = load_scenario(manifest.scenario)
        path = plan_path(out, "proposed", manifest.sweep[0])
        plan = AllocationPlan.from_json(path) if path.exists() else None
        plot_deployment(scenario, out / "deployment.png", plan)
    return EXIT_OK


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Cannot serialize {type(value).__name__}")


COMMANDS = {
    "optimize": cmd_optimize,
    "compare": cmd_compare,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ranopt", description="Radio resource optimizer and packet simulator"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    generate = sub.add_parser("generate", help="Write a random scenario file")
    generate.add_argument("--preset", choices=sorted(PRESETS), default="medium")
    generate.add_argument("--n", type=int, help="number of APs")
    generate.add_argument("--k", type=int, help="number of devices")
    generate.add_argument("--side", type=float, help="side of the square area in meters")
    generate.add_argument("--lambda", dest="traffic", type=float, help="packets/s per device")
    generate.add_argument("--seed", type=int, default=0)
    generate.add_argument("--out", type=Path, help="scenario file (default: data/)")

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--manifest", type=Path, help="JSON run manifest; flags override it")
    run.add_argument("--scenario", type=Path)
    run.add_argument(
        "--scheme", dest="schemes", action="append", choices=SCHEMES, help="repeatable"
    )
    run.add_argument("--sweep", type=float, nargs="+", help="traffic values, packets/s/device")
    run.add_argument("--seed", dest="seeds", type=int, nargs="+")
    run.add_argument("--jobs", type=int)
    run.add_argument("--out", type=Path)
    run.add_argument("--tol-inner", dest="tol_inner", type=float)
    run.add_argument("--tol-outer", dest="tol_outer", type=float)
    run.add_argument("--max-profiles", dest="max_profiles", type=int)
    run.add_argument("--horizon", dest="horizon_s", type=float, help="simulated seconds")
    run.add_argument("--packets", dest="max_packets", type=int, help="simulated arrivals")
    run.add_argument("--warmup", type=float)
    run.add_argument("--power-price", dest="power_price", type=float)
    run.add_argument("--maintenance-cost", dest="maintenance_cost", type=float)
    run.add_argument("--suite", choices=sorted(SUITE_SIZES))
    for name, command in COMMANDS.items():
        sub.add_parser(name, parents=[run], help=command.__doc__.splitlines()[0])
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            return cmd_generate(args)
        manifest = RunManifest.from_args(args)
        return COMMANDS[args.command](manifest)
    except RunError as e:
        logger.error("Run failed: %s", e)
        return EXIT_FAILED
    except (ValueError, OSError) as e:
        logger.error("%s", e)
        return EXIT_USAGE
