# Unit tests for the property checks behind the verify command

import numpy as np
import pytest

from src.ranopt import properties
from src.ranopt.properties import (
    CheckResult,
    check_delay_gradient,
    check_inner_monotonicity,
    check_mm1_single_link,
    check_oracle_2x2,
    check_sparsity,
    conservative,
    grid_optimum,
    random_network,
    run_suite,
    single_link,
    tiny_delay_utility,
)
from tests.testdata import ISOLATED_2X2, SOLE_LINK


def test_random_network_reproducible() -> None:
    first, gains, nb = random_network(4, 5, 7)
    again, gains_again, _ = random_network(4, 5, 7)
    assert first == again
    np.testing.assert_array_equal(gains.g, gains_again.g)
    assert nb.n_aps == 5 and nb.n_devices == 7
    assert first.params.area_side_m == pytest.approx(1330.0 * np.sqrt(0.05))


def test_single_link() -> None:
    scenario, gains, nb = single_link()
    assert (scenario.n_aps, scenario.n_devices) == (1, 1)
    assert nb.member[0, 0]


@pytest.mark.parametrize(
    "network, weights, expected",
    [
        (SOLE_LINK, [1.0], np.log2(11.0)),
        (ISOLATED_2X2, [1.0, 1.0], 4.0),
        (ISOLATED_2X2, [0.0, 0.0], 0.0),
    ],
)
def test_grid_optimum(network: tuple, weights: list, expected: float) -> None:
    gains, nb = network
    assert grid_optimum(np.array(weights), nb, gains, levels=11) == pytest.approx(expected)


def test_tiny_delay_utility() -> None:
    scenario, gains, nb = random_network(0, 2, 2, side_m=150.0)
    u = tiny_delay_utility(scenario, nb, gains, load=0.3)
    assert u.is_delay
    assert np.all(u.arrival_rates > 0)


def test_check_inner_monotonicity() -> None:
    result = check_inner_monotonicity(instances=4, max_aps=5, max_devices=8)
    assert result.name == "inner_monotonicity"
    assert result.detail["failures"] == []
    assert result.detail["max_iterations"] >= 1


def test_check_oracle_2x2() -> None:
    result = check_oracle_2x2(instances=3, levels=20)
    assert result.detail["instances"] == 3
    assert 0.0 <= result.detail["pass_rate"] <= 1.0
    assert result.detail["worst_ratio"] > 0.5


def test_check_sparsity() -> None:
    result = check_sparsity(instances=1)
    assert result.passed
    assert len(result.detail["reports"]) == 2


def test_check_delay_gradient() -> None:
    result = check_delay_gradient(points=20)
    assert result.passed
    assert result.detail["worst_rel_error"] < 1e-4


def test_check_mm1_single_link() -> None:
    result = check_mm1_single_link(load=0.5, packets=20_000)
    assert result.detail["packets"] >= 20_000
    assert result.detail["rel_error"] < 0.1


@pytest.mark.parametrize(
    "simulated, analytic, expected",
    [
        ([1.0, 1.1, 0.9], 1.0, True),
        ([0.5], 1.0, True),
        ([1.5], 1.0, False),
        ([2.0, 2.1, 1.9], 1.0, False),
        ([1.02, 1.01, 1.03, 0.99], 1.0, True),
    ],
)
def test_conservative(simulated: list, analytic: float, expected: bool) -> None:
    assert conservative(simulated, analytic) is expected


def test_check_result_as_dict() -> None:
    result = CheckResult("x", True, {"a": 1})
    assert result.as_dict() == {"name": "x", "passed": True, "detail": {"a": 1}}


def test_run_suite_unknown_size() -> None:
    with pytest.raises(ValueError):
        run_suite("huge")


def test_run_suite_counts_crash_as_failure(monkeypatch) -> None:
    """Every check configured for the size runs; one raising fails alone."""
    calls = []

    def passing(name):
        def check(**kwargs):
            calls.append((name, kwargs["seed"]))
            return CheckResult(name, True)

        return check

    def crashing(**kwargs):
        raise RuntimeError("boom")

    for name in properties.SUITE_SIZES["quick"]:
        monkeypatch.setitem(properties.CHECKS, name, passing(name))
    monkeypatch.setitem(properties.CHECKS, "sparsity", crashing)
    results = run_suite("quick", seed=9)
    assert [r.name for r in results] == list(properties.SUITE_SIZES["quick"])
    failed = [r for r in results if not r.passed]
    assert [r.name for r in failed] == ["sparsity"]
    assert failed[0].detail["error"] == "RuntimeError: boom"
    assert all(seed == 9 for _, seed in calls)
