import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from w2h.domain import (CaseError, ScenarioTrace, WindFarm, case_from_dict, head_loss_exact,
                        load_case, load_scenario, save_case, save_scenario, validate_case,
                        variant, wind_speed_to_power)

from helpers import BUNDLED, bundled, case_dict, case_with

FARM = WindFarm("w", "b", rated_power=2.0, cut_in=3.0, rated_speed=12.0, cut_out=25.0,
                hosting_capacity=1.0)


# --- loading ------------------------------------------------------------------------


def test_bundled_case13_counts():
    case = load_case("case13.json")
    assert len(case.power.buses) == 13
    assert len(case.water.nodes) == 8


def test_bundled_case33_counts():
    case = load_case("case33.json")
    assert len(case.power.buses) == 33
    assert len(case.power.branches) == 32


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_cases_validate_clean(name):
    case, scen = bundled(name)
    assert validate_case(case) == []
    assert len(scen) == 288


def test_dangling_branch_reference():
    def edit(d):
        d["power"]["branches"][0]["to"] = "nowhere"
    with pytest.raises(CaseError, match="dangling reference.*nowhere"):
        case_with("toy3", edit)


def test_equal_voltage_bounds_rejected():
    def edit(d):
        d["power"]["buses"][0]["v_lo"] = d["power"]["buses"][0]["v_hi"] = 1.0
    with pytest.raises(CaseError, match="V_lo < V_hi"):
        case_with("toy3", edit)


def test_missing_file_and_parse_error_locus(tmp_path):
    with pytest.raises(CaseError, match="not found"):
        load_case(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "power": {\n    "buses": [,]\n')
    with pytest.raises(CaseError, match="line 3"):
        load_case(bad)


def test_schema_error_names_field():
    d = case_dict("toy3")
    del d["costs"]["a1"]
    with pytest.raises(CaseError, match="costs"):
        case_from_dict(d)


def test_save_load_round_trip(tmp_path):
    for name in BUNDLED:
        case, _ = bundled(name)
        path = tmp_path / f"{name}.json"
        save_case(case, path)
        again = load_case(path)
        assert again == case
        assert again.digest() == case.digest()


# --- validation report --------------------------------------------------------------


def test_branch_cycle_reported_non_radial():
    case, _ = bundled("toy3")
    extra = replace(case.power.branches[0], from_bus="b3", to_bus="b1")
    cyclic = replace(case, power=replace(case.power, branches=case.power.branches + (extra,)))
    report = validate_case(cyclic)
    assert any("non-radial network" in line for line in report)


def test_zero_pump_efficiency_reported():
    case, _ = bundled("toy3")
    pipes = tuple(replace(p, pump=replace(p.pump, efficiency=0.0)) if p.pump else p
                  for p in case.water.pipes)
    bad = replace(case, water=replace(case.water, pipes=pipes))
    assert any("efficiency out of range" in line for line in validate_case(bad))


def test_valid_case_has_empty_report():
    case, _ = bundled("case13")
    assert validate_case(case) == []


# --- physics ------------------------------------------------------------------------


@pytest.mark.parametrize("speed, expected", [(2.0, 0.0), (12.0, 2.0), (30.0, 0.0),
                                             (3.0, 0.0), (25.0, 2.0)])
def test_wind_curve_points(speed, expected):
    assert wind_speed_to_power(speed, FARM) == pytest.approx(expected, abs=1e-12)


def test_wind_curve_cubic_interior():
    v = 8.0
    expected = 2.0 * (v ** 3 - 27.0) / (12.0 ** 3 - 27.0)
    assert wind_speed_to_power(v, FARM) == pytest.approx(expected, rel=1e-12)


farms = st.tuples(st.floats(0.5, 5.0), st.floats(1.0, 10.0), st.floats(1.0, 15.0),
                  st.floats(0.1, 50.0)).map(
    lambda t: WindFarm("w", "b", rated_power=t[3], cut_in=t[0], rated_speed=t[0] + t[1],
                       cut_out=t[0] + t[1] + t[2], hosting_capacity=0.0))


@given(farms)
@settings(max_examples=200, deadline=None)
def test_wind_curve_continuous_at_cut_in_and_rated(farm):
    eps = 1e-9
    ci, vr = farm.cut_in, farm.rated_speed
    assert abs(wind_speed_to_power(ci - eps, farm) - wind_speed_to_power(ci + eps, farm)) \
        <= 1e-6 * farm.rated_power
    assert abs(wind_speed_to_power(vr - eps, farm) - wind_speed_to_power(vr + eps, farm)) \
        <= 1e-6 * farm.rated_power


@given(farms, st.lists(st.floats(0.0, 1.0), min_size=2, max_size=30))
@settings(max_examples=200, deadline=None)
def test_wind_curve_monotone_between_cut_in_and_rated(farm, fractions):
    speeds = sorted(farm.cut_in + u * (farm.rated_speed - farm.cut_in) for u in fractions)
    powers = [wind_speed_to_power(v, farm) for v in speeds]
    assert all(b >= a - 1e-12 for a, b in zip(powers, powers[1:]))
    assert all(0.0 <= p <= farm.rated_power for p in powers)


@pytest.mark.parametrize("r, f, expected", [(2.0, 3.0, 18.0), (1.0, 0.0, 0.0), (1.0, -2.0, -4.0)])
def test_head_loss_points(r, f, expected):
    assert head_loss_exact(r, f) == expected


@given(st.floats(1e-6, 1e3), st.floats(-1e3, 1e3))
def test_head_loss_odd(r, f):
    assert head_loss_exact(r, f) == -head_loss_exact(r, -f)


# --- scenarios ----------------------------------------------------------------------


def test_scenario_round_trip_and_window(tmp_path):
    _, scen = bundled("toy3")
    path = tmp_path / "s.csv"
    save_scenario(scen, path)
    again = load_scenario(path)
    assert again.columns() == scen.columns()
    for key in scen.columns()[1:]:
        np.testing.assert_array_equal(again.column(key), scen.column(key))
    w = scen.window(286, 4)
    assert len(w) == 4
    assert w.wind_speed[2] == scen.wind_speed[0]
    with pytest.raises(CaseError):
        scen.window(286, 4, wrap=False)


def test_scenario_rejects_bad_input(tmp_path):
    with pytest.raises(CaseError, match="length"):
        ScenarioTrace(np.ones(3), {"d.x": np.ones(2)})
    with pytest.raises(CaseError, match="nonnegative"):
        ScenarioTrace(np.array([1.0, -1.0]))
    p = tmp_path / "s.csv"
    p.write_text("p_l.b1\n1.0\n")
    with pytest.raises(CaseError, match="wind_speed"):
        load_scenario(p)


def test_variants_strip_subsystems():
    case, _ = bundled("case13")
    diesel = variant(case, "diesel-only")
    wind = variant(case, "wind-only")
    assert diesel.power.wind is None and diesel.hydrogen is None
    assert wind.power.wind is not None and wind.hydrogen is None
    assert all(g.capture_ratio == 0 for g in wind.power.diesel)
    assert variant(case, "w2h") is case
    with pytest.raises(ValueError):
        variant(case, "solar")


def test_dt_hours():
    case, _ = bundled("toy3")
    assert math.isclose(case.dt_hours, 5 / 60)
