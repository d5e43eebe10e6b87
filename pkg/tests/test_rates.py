# Unit tests for power profiles, SINR and allocation plans

import math
from pathlib import Path
import numpy as np
import pytest

from src.ranopt.rates import (
    IDLE,
    AllocationPlan,
    PowerProfile,
    check_bandwidth,
    make_plan,
    plan_power,
    plan_rates,
    profile_rates,
    sinr,
    spectral_efficiency,
)
from tests.testdata import (
    CROSS_2X2,
    ISOLATED_2X2,
    SHARED_AP,
    SOLE_LINK,
    TWO_APS_ONE_DEVICE,
    UNIT_BAND,
)

BOTH_SERVE_DEVICE_0 = PowerProfile([0, 0], [1.0, 1.0])
ONLY_AP_0 = PowerProfile.from_links(2, [(0, 0, 1.0)])
ONLY_AP_1 = PowerProfile.from_links(2, [(1, 1, 1.0)])
FULL_REUSE_2X2 = PowerProfile([0, 1], [1.0, 1.0])


@pytest.mark.parametrize(
    "profile, link, network, expected",
    [
        (PowerProfile([0], [1.0]), (0, 0), SOLE_LINK, 1.0),
        (PowerProfile([0], [0.0]), (0, 0), SOLE_LINK, 0.0),
        (BOTH_SERVE_DEVICE_0, (0, 0), TWO_APS_ONE_DEVICE, 2.0 / 3.0),
        (BOTH_SERVE_DEVICE_0, (1, 0), TWO_APS_ONE_DEVICE, 0.25),
        (FULL_REUSE_2X2, (0, 0), CROSS_2X2, 1.0 / 0.81),
        (ONLY_AP_0, (0, 0), CROSS_2X2, 100.0),
    ],
)
def test_sinr(profile: PowerProfile, link: tuple, network: tuple, expected: float) -> None:
    gains, nb = network
    assert sinr(profile, link, nb, gains) == pytest.approx(expected, rel=1e-12)


def test_sinr_outside_neighborhood() -> None:
    gains, nb = ISOLATED_2X2
    with pytest.raises(ValueError):
        sinr(FULL_REUSE_2X2, (1, 0), nb, gains)


@pytest.mark.parametrize("gamma, expected", [(1.0, 1.0), (0.0, 0.0), (3.0, 2.0)])
def test_spectral_efficiency(gamma: float, expected: float) -> None:
    assert spectral_efficiency(gamma) == pytest.approx(expected)


def test_profile_rates_idle() -> None:
    gains, nb = CROSS_2X2
    np.testing.assert_array_equal(profile_rates(PowerProfile.idle(2), nb, gains), [0.0, 0.0])


def test_profile_rates_two_links_to_one_device() -> None:
    """Both links count towards the device they serve."""
    gains, nb = TWO_APS_ONE_DEVICE
    rates = profile_rates(BOTH_SERVE_DEVICE_0, nb, gains)
    assert rates[0] == pytest.approx(math.log2(5 / 3) + math.log2(1.25))


def test_profile_rates_only_served_device() -> None:
    """An AP serving one device adds nothing to the other."""
    gains, nb = SHARED_AP
    rates = profile_rates(PowerProfile([1], [1.0]), nb, gains)
    assert rates[0] == 0.0
    assert rates[1] == pytest.approx(math.log2(1.5))


def test_plan_rates_single_profile() -> None:
    gains, nb = CROSS_2X2
    plan = make_plan([FULL_REUSE_2X2], [UNIT_BAND], nb, gains, UNIT_BAND)
    np.testing.assert_allclose(plan.rates, profile_rates(FULL_REUSE_2X2, nb, gains))


@pytest.mark.parametrize("split", [0.5, 0.1, 0.9])
def test_plan_rates_linear_in_beta(split: float) -> None:
    """A profile split in two segments delivers the same rates as one."""
    gains, nb = CROSS_2X2
    whole = make_plan([FULL_REUSE_2X2], [4.0], nb, gains, 4.0)
    twice = [FULL_REUSE_2X2, FULL_REUSE_2X2]
    halves = make_plan(twice, [4 * split, 4 * (1 - split)], nb, gains, 4.0)
    np.testing.assert_allclose(halves.rates, whole.rates, rtol=1e-12)


def test_plan_rates_hand_computed() -> None:
    """Orthogonal 1/4 + 3/4 split against full reuse on the cross-gain network."""
    gains, nb = CROSS_2X2
    plan = make_plan([ONLY_AP_0, ONLY_AP_1], [0.25, 0.75], nb, gains, UNIT_BAND)
    np.testing.assert_allclose(plan.rates, [0.25 * math.log2(101), 0.75 * math.log2(101)])
    np.testing.assert_allclose(plan_rates(plan, nb, gains), plan.rates)
    reuse = make_plan([FULL_REUSE_2X2], [UNIT_BAND], nb, gains, UNIT_BAND)
    np.testing.assert_allclose(reuse.rates, [math.log2(1 + 1 / 0.81)] * 2)


def test_plan_power() -> None:
    gains, nb = SOLE_LINK
    idle = make_plan([PowerProfile.idle(1)], [2.0], nb, gains, 2.0)
    full = make_plan([PowerProfile([0], [nb.p_max])], [2.0], nb, gains, 2.0)
    half = make_plan(
        [PowerProfile([0], [0.0]), PowerProfile([0], [nb.p_max])], [1.0, 1.0], nb, gains, 2.0
    )
    assert plan_power(idle)[0] == 0.0
    assert plan_power(full)[0] == pytest.approx(2.0 * nb.p_max)
    assert plan_power(half)[0] == pytest.approx(nb.p_max)


@pytest.mark.parametrize(
    "beta, bandwidth",
    [
        ([0.5, 0.4], 1.0),
        ([1.2, -0.2], 1.0),
        ([1.0], 0.0),
    ],
)
def test_plan_invalid_bandwidth(beta: list, bandwidth: float) -> None:
    profiles = [ONLY_AP_0, ONLY_AP_1][: len(beta)]
    with pytest.raises(ValueError):
        AllocationPlan(profiles, beta, [0.0, 0.0], bandwidth)


def test_check_bandwidth_tolerance() -> None:
    check_bandwidth(np.array([0.5, 0.5 + 1e-12]), 1.0)
    with pytest.raises(ValueError):
        check_bandwidth(np.array([0.5, 0.5 + 1e-6]), 1.0)


def test_profile_idle_has_no_power() -> None:
    profile = PowerProfile([IDLE, 0], [5.0, 1.0])
    np.testing.assert_array_equal(profile.psd, [0.0, 1.0])
    assert profile.links() == [(1, 0, 1.0)]
    assert profile == PowerProfile.from_links(2, [(1, 0, 1.0)])
    assert len({profile, PowerProfile.from_links(2, [(1, 0, 1.0)])}) == 1


@pytest.mark.parametrize(
    "served, psd",
    [
        ([0, 0], [1.0]),
        ([-2, 0], [1.0, 1.0]),
        ([0, 0], [-1.0, 1.0]),
        ([0, 0], [math.nan, 1.0]),
    ],
)
def test_profile_invalid(served: list, psd: list) -> None:
    with pytest.raises(ValueError):
        PowerProfile(served, psd)


@pytest.mark.parametrize(
    "profile",
    [
        PowerProfile([0], [2.0]),  # above P_max
        PowerProfile([2], [1.0]),  # no such device
        PowerProfile([0, 0], [1.0, 1.0]),  # wrong AP count
    ],
)
def test_profile_check(profile: PowerProfile) -> None:
    gains, nb = SHARED_AP
    with pytest.raises(ValueError):
        profile.check(nb)


def test_profile_check_outside_neighborhood() -> None:
    _, nb = CROSS_2X2
    PowerProfile([1, 0], [1.0, 1.0]).check(nb)
    _, isolated = ISOLATED_2X2
    with pytest.raises(ValueError):
        PowerProfile([1, IDLE], [1.0, 0.0]).check(isolated)


def test_plan_pruned_and_links() -> None:
    """Zero-width segments are dropped; links list what reaches each device."""
    gains, nb = CROSS_2X2
    plan = make_plan([ONLY_AP_0, ONLY_AP_1, FULL_REUSE_2X2], [0.5, 0.5, 0.0], nb, gains, 1.0)
    assert plan.active_segments == 2
    pruned = plan.pruned(nb, gains)
    assert len(pruned.profiles) == 2
    np.testing.assert_allclose(pruned.rates, plan.rates)
    assert pruned.serving_links() == {0: [(0, 0, 1.0)], 1: [(1, 1, 1.0)]}


def test_plan_json(tmp_path: Path) -> None:
    gains, nb = CROSS_2X2
    plan = make_plan([ONLY_AP_0, FULL_REUSE_2X2], [0.3, 0.7], nb, gains, 1.0, "proposed")
    path = tmp_path / "plan.json"
    plan.to_json(path)
    loaded = AllocationPlan.from_json(path)
    assert loaded.scheme == "proposed"
    assert loaded.profiles == plan.profiles
    np.testing.assert_allclose(loaded.beta, plan.beta, rtol=1e-12)
    np.testing.assert_array_equal(loaded.rates, plan.rates)
