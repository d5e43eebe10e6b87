# Unit tests for scenario generation and scenario files

import json
from pathlib import Path
import numpy as np
import pytest

from src.ranopt.scenario import (
    NetworkScenario,
    ScenarioParams,
    ScenarioParseError,
    dbm_to_watts,
    generate_scenario,
    load_scenario,
    save_scenario,
)
from tests.testdata import SMALL_PARAMS, TINY_PARAMS, TINY_SCENARIO, TINY_SCENARIO_FILE


@pytest.mark.parametrize(
    "n_aps, n_devices, side, seed",
    [
        (100, 250, 1330.0, 0),
        (100, 250, 1330.0, 12),
        (1, 1, 10.0, 0),
        (10, 25, 420.0, 3),
    ],
)
def test_generate_scenario_bounds(n_aps: int, n_devices: int, side: float, seed: int) -> None:
    """All points lie in the square and the counts match."""
    params = ScenarioParams(n_aps=n_aps, n_devices=n_devices, area_side_m=side, seed=seed)
    scenario = generate_scenario(params)
    assert scenario.ap_positions.shape == (n_aps, 2)
    assert scenario.device_positions.shape == (n_devices, 2)
    for points in (scenario.ap_positions, scenario.device_positions):
        assert np.all(points >= 0) and np.all(points <= side)
    assert np.all(scenario.arrival_rates == params.arrival_rate)


def test_generate_scenario_deterministic() -> None:
    """Same parameters, same seed: bit-identical scenarios."""
    assert generate_scenario(SMALL_PARAMS) == generate_scenario(SMALL_PARAMS)


def test_generate_scenario_seed_matters() -> None:
    other = ScenarioParams(n_aps=4, n_devices=6, area_side_m=200.0, seed=4)
    assert generate_scenario(SMALL_PARAMS) != generate_scenario(other)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_aps": 0},
        {"n_devices": -1},
        {"area_side_m": 0.0},
        {"arrival_rate": -5.0},
        {"bandwidth_hz": 0.0},
        {"snr_threshold": 0.0},
        {"neighborhood_cap": 0},
        {"los_mode": "sometimes"},
        {"n_aps": 2.5},
    ],
)
def test_params_invalid(kwargs: dict) -> None:
    """Invalid parameters raise ValueError."""
    with pytest.raises(ValueError):
        ScenarioParams(**kwargs)


def test_params_presets() -> None:
    """Presets keep the AP density and accept overrides."""
    small = ScenarioParams.preset("small")
    medium = ScenarioParams.preset("medium", seed=5)
    assert (small.n_aps, small.n_devices) == (10, 25)
    assert (medium.n_aps, medium.n_devices, medium.seed) == (100, 250, 5)
    assert medium.area_side_m == 1330.0
    with pytest.raises(ValueError):
        ScenarioParams.preset("huge")


def test_params_radio_constants() -> None:
    """23 dBm over 10 MHz and -174 dBm/Hz noise."""
    params = ScenarioParams()
    assert dbm_to_watts(30.0) == pytest.approx(1.0)
    assert params.p_max == pytest.approx(0.2 / 10e6, rel=1e-2)
    assert params.noise_psd == pytest.approx(10 ** (-20.4), rel=1e-9)


def test_scenario_from_file() -> None:
    """The hand-written file loads with exactly 2 APs and 2 devices."""
    scenario = load_scenario(TINY_SCENARIO_FILE)
    assert (scenario.n_aps, scenario.n_devices) == (2, 2)
    assert scenario == TINY_SCENARIO
    assert scenario.params == TINY_PARAMS


def test_scenario_file_round_trip(tmp_path: Path) -> None:
    """Save then load gives an equal scenario, heterogeneous traffic included."""
    scenario = generate_scenario(SMALL_PARAMS)
    skewed = NetworkScenario(
        scenario.params,
        scenario.ap_positions,
        scenario.device_positions,
        np.linspace(1.0, 6.0, scenario.n_devices),
    )
    for s in (scenario, skewed):
        path = tmp_path / "scenario.json"
        save_scenario(s, path)
        assert load_scenario(path) == s


def _tiny_dict() -> dict:
    with TINY_SCENARIO_FILE.open("r") as f:
        return json.load(f)


@pytest.mark.parametrize(
    "mutate, field_name",
    [
        (lambda d: d["params"].pop("lambda"), "lambda"),
        (lambda d: d["params"].pop("seed"), "seed"),
        (lambda d: d.pop("ap_positions"), "ap_positions"),
        (lambda d: d["device_positions"].pop(), "device_positions"),
        (lambda d: d["params"].update(n_aps="two"), "n_aps"),
        (lambda d: d["ap_positions"][0].__setitem__(0, 500.0), "ap_positions"),
        (lambda d: d.update(lambda_per_device=[1.0, -1.0]), "lambda_per_device"),
        (lambda d: d["params"].update(bandwidth_hz=-1.0), "bandwidth_hz"),
    ],
)
def test_scenario_parse_errors(tmp_path: Path, mutate, field_name: str) -> None:
    """Malformed files raise ScenarioParseError naming the field."""
    data = _tiny_dict()
    mutate(data)
    path = tmp_path / "broken.json"
    with path.open("w") as f:
        json.dump(data, f)
    with pytest.raises(ScenarioParseError) as info:
        load_scenario(path)
    assert info.value.field == field_name


def test_scenario_parse_not_json(tmp_path: Path) -> None:
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ScenarioParseError):
        load_scenario(path)


def test_with_traffic() -> None:
    """Homogeneous traffic is replaced; heterogeneous traffic keeps its shape."""
    assert np.all(TINY_SCENARIO.with_traffic(12.0).arrival_rates == 12.0)
    skewed = NetworkScenario(
        TINY_PARAMS, TINY_SCENARIO.ap_positions, TINY_SCENARIO.device_positions, [1.0, 3.0]
    )
    scaled = skewed.with_traffic(10.0)
    np.testing.assert_allclose(scaled.arrival_rates, [5.0, 15.0])
    assert scaled.arrival_rates.mean() == pytest.approx(10.0)
    with pytest.raises(ValueError):
        TINY_SCENARIO.with_traffic(0.0)


def test_scenario_loads() -> None:
    np.testing.assert_allclose(TINY_SCENARIO.loads_bits, [2.5e6, 2.5e6])
    assert TINY_SCENARIO.is_homogeneous
