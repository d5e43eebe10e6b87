# Unit tests for the packet-level simulator

import math
from pathlib import Path
import numpy as np
import pandas as pd
import pytest

from src.ranopt.baselines import full_reuse_maxrsrp
from src.ranopt.channel import build_network
from src.ranopt.properties import single_link
from src.ranopt.rates import PowerProfile, make_plan
from src.ranopt.simulator import SimConfig, _LinkRates, analytic_delays, simulate
from tests.testdata import ISOLATED_2X2, SHARED_AP, TINY_SCENARIO, UNIT_BAND


@pytest.fixture(scope="module")
def tiny() -> tuple:
    gains, nb = build_network(TINY_SCENARIO)
    plan = full_reuse_maxrsrp(nb, gains, TINY_SCENARIO.bandwidth_hz)
    return plan, TINY_SCENARIO, nb, gains


def test_single_link_matches_mm1() -> None:
    """A lone link at load 0.5 is an M/M/1 queue."""
    scenario, gains, nb = single_link(0)
    plan = full_reuse_maxrsrp(nb, gains, scenario.bandwidth_hz)
    mu = plan.rates[0] / scenario.mean_packet_bits
    loaded = scenario.with_traffic(0.5 * mu)
    outcome = simulate(SimConfig(plan, loaded, nb, gains, max_packets=20_000, seed=1))
    expected = 1.0 / (0.5 * mu)
    assert outcome.network_mean_delay == pytest.approx(expected, rel=0.1)
    assert not outcome.unstable.any()
    assert outcome.p50[0] < outcome.p95[0] < outcome.p99[0]


def test_count_mode_drains_queues(tiny: tuple) -> None:
    """After the last admitted arrival every queued packet still departs."""
    plan, scenario, nb, gains = tiny
    outcome = simulate(SimConfig(plan, scenario, nb, gains, max_packets=500, warmup=0.2))
    assert outcome.arrivals.sum() == 500
    np.testing.assert_array_equal(outcome.in_system, [0, 0])
    np.testing.assert_array_equal(outcome.departures, outcome.arrivals)
    assert outcome.packets.sum() == 400
    assert not outcome.unstable.any()


def test_count_mode_overload_flagged(tiny: tuple) -> None:
    """The backlog left when arrivals close still marks overloaded devices."""
    plan, scenario, nb, gains = tiny
    mu = plan.rates / scenario.mean_packet_bits
    cfg = SimConfig(plan, scenario, nb, gains, max_packets=2000, arrival_rates=4.0 * mu)
    outcome = simulate(cfg)
    assert outcome.unstable.all()
    np.testing.assert_array_equal(outcome.in_system, [0, 0])


def test_disjoint_segments_match_independent_queues() -> None:
    """Two links on their own halves of the band never interfere, so each
    device sees its own M/M/1 queue."""
    gains, nb = ISOLATED_2X2
    bandwidth = TINY_SCENARIO.bandwidth_hz
    halves = [
        PowerProfile.from_links(2, [(0, 0, nb.p_max)]),
        PowerProfile.from_links(2, [(1, 1, nb.p_max)]),
    ]
    plan = make_plan(halves, np.array([bandwidth / 2, bandwidth / 2]), nb, gains, bandwidth)
    arrival_rates = np.array([10.0, 5.0])
    mean_bits = TINY_SCENARIO.mean_packet_bits
    np.testing.assert_allclose(plan.rates / mean_bits, [20.0, 20.0])
    cfg = SimConfig(
        plan, TINY_SCENARIO, nb, gains, max_packets=60_000, seed=3, arrival_rates=arrival_rates
    )
    outcome = simulate(cfg)
    expected = analytic_delays(plan, arrival_rates, mean_bits)
    np.testing.assert_allclose(expected, [0.1, 1.0 / 15.0])
    np.testing.assert_allclose(outcome.mean_delay, expected, rtol=0.1)
    assert not outcome.unstable.any()


def test_horizon_mode(tiny: tuple) -> None:
    plan, scenario, nb, gains = tiny
    outcome = simulate(SimConfig(plan, scenario, nb, gains, horizon_s=20.0, seed=2))
    assert outcome.sim_time == 20.0
    np.testing.assert_array_equal(outcome.arrivals, outcome.departures + outcome.in_system)
    assert np.all(outcome.packets > 0)
    assert not outcome.unstable.any()


def test_zero_load(tiny: tuple) -> None:
    plan, scenario, nb, gains = tiny
    cfg = SimConfig(plan, scenario, nb, gains, horizon_s=5.0, arrival_rates=np.zeros(2))
    outcome = simulate(cfg)
    assert outcome.arrivals.sum() == 0
    assert math.isnan(outcome.network_mean_delay)
    assert not outcome.unstable.any()


def test_overload_flagged(tiny: tuple) -> None:
    """Arrivals far above the service rate leave a growing queue."""
    plan, scenario, nb, gains = tiny
    mu = plan.rates / scenario.mean_packet_bits
    cfg = SimConfig(plan, scenario, nb, gains, horizon_s=5.0, arrival_rates=4.0 * mu)
    outcome = simulate(cfg)
    assert outcome.unstable.all()


def test_seed_reproducible(tiny: tuple) -> None:
    plan, scenario, nb, gains = tiny
    first = simulate(SimConfig(plan, scenario, nb, gains, horizon_s=10.0, seed=5))
    again = simulate(SimConfig(plan, scenario, nb, gains, horizon_s=10.0, seed=5))
    other = simulate(SimConfig(plan, scenario, nb, gains, horizon_s=10.0, seed=6))
    np.testing.assert_array_equal(first.mean_delay, again.mean_delay)
    assert first.network_mean_delay == again.network_mean_delay
    assert first.network_mean_delay != other.network_mean_delay


@pytest.mark.parametrize(
    "kwargs",
    [
        {},
        {"horizon_s": 1.0, "max_packets": 10},
        {"horizon_s": -1.0},
        {"max_packets": 0},
        {"horizon_s": 1.0, "warmup": 1.0},
        {"horizon_s": 1.0, "arrival_rates": np.array([1.0, -1.0])},
        {"horizon_s": 1.0, "arrival_rates": np.ones(3)},
    ],
)
def test_sim_config_invalid(tiny: tuple, kwargs: dict) -> None:
    plan, scenario, nb, gains = tiny
    with pytest.raises(ValueError):
        SimConfig(plan, scenario, nb, gains, **kwargs)


def test_sim_config_mismatched_network(tiny: tuple) -> None:
    _, scenario, nb, gains = tiny
    shared_gains, shared_nb = SHARED_AP
    other = full_reuse_maxrsrp(shared_nb, shared_gains, UNIT_BAND)
    with pytest.raises(ValueError):
        SimConfig(other, scenario, nb, gains, horizon_s=1.0)


def test_link_rates_follow_busy_set(tiny: tuple) -> None:
    """All queues busy gives the plan's rates; an idle neighbour only helps."""
    plan, _, nb, gains = tiny
    links = _LinkRates(plan, nb, gains)
    for j in range(plan.n_devices):
        links.set_busy(j, True)
    np.testing.assert_allclose(links.rates, plan.rates, rtol=1e-9)
    links.set_busy(1, False)
    assert links.rates[0] >= plan.rates[0] * (1 - 1e-12)
    links.refresh()
    assert links.rates[0] >= plan.rates[0] * (1 - 1e-12)


def test_link_rates_shared_ap() -> None:
    """One link per segment: no interference, the plan rates at once."""
    gains, nb = SHARED_AP
    plan = full_reuse_maxrsrp(nb, gains, UNIT_BAND)
    links = _LinkRates(plan, nb, gains)
    np.testing.assert_allclose(links.rates, plan.rates)


def test_analytic_delays() -> None:
    gains, nb = SHARED_AP
    plan = full_reuse_maxrsrp(nb, gains, UNIT_BAND)
    delays = analytic_delays(plan, np.array([0.25, 0.5]), 1.0)
    assert delays[0] == pytest.approx(4.0)
    assert delays[1] == math.inf


def test_outcome_to_csv(tiny: tuple, tmp_path: Path) -> None:
    plan, scenario, nb, gains = tiny
    outcome = simulate(SimConfig(plan, scenario, nb, gains, horizon_s=5.0))
    path = tmp_path / "sim.csv"
    outcome.to_csv(path)
    frame = pd.read_csv(path)
    assert list(frame.columns) == [
        "device",
        "mean_delay",
        "p50",
        "p95",
        "p99",
        "packets",
        "unstable",
    ]
    assert list(frame["device"]) == ["0", "1", "network"]
    assert frame["packets"].iloc[-1] == outcome.packets.sum()
