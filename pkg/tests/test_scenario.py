import pytest

from owf_emt import DATA_DIR
from owf_emt.scenario import ScenarioError, WindProfile, apply_wind_profile, load_scenario, parse_scenario

BASE = """
[SCENARIO]
case = nine_bus.case
dt = 50e-6
t_end = 2
"""


def test_constant_profile():
    assert apply_wind_profile([(0.0, 10.0)], 7.3) == 10.0


def test_linear_interpolation_and_hold():
    pts = [(0.0, 8.0), (10.0, 12.0)]
    assert apply_wind_profile(pts, 5.0) == pytest.approx(10.0)
    assert apply_wind_profile(pts, -1.0) == 8.0
    assert apply_wind_profile(pts, 30.0) == 12.0


def test_step_in_profile():
    prof = WindProfile(((0.0, 5.0), (2.0, 5.0), (2.0, 9.0)))
    assert prof(1.999) == 5.0
    assert prof(2.0) == 9.0


def test_bad_profiles():
    with pytest.raises(ScenarioError):
        WindProfile(((1.0, 5.0), (0.0, 6.0)))
    with pytest.raises(ScenarioError):
        WindProfile(((0.0, -1.0),))
    with pytest.raises(ScenarioError):
        apply_wind_profile([], 0.0)


def test_shipped_scenarios_parse():
    for name in ("scenario1_wind.scn", "scenario2_fault.scn", "flat_run.scn"):
        sc = load_scenario(DATA_DIR / name)
        assert sc.case_path.exists()
        assert sc.dt == 50e-6
    sc = load_scenario(DATA_DIR / "scenario2_fault.scn")
    (fault,) = sc.faults
    assert (fault.bus, fault.t_on, fault.duration) == (5, 15.0, 0.15)
    assert fault.fault_r <= 1e-2


def test_parse_sections(tmp_path):
    text = BASE + """
[SCHEDULE]
swap_zip_loads = 0.8
[WIND owf1]
0 9
5 11
[BREAKER]
L45 open 1.5
[OVERRIDES]
owf1.chopper_enabled = false
"""
    sc = parse_scenario(text, tmp_path)
    assert sc.case_path == tmp_path / "nine_bus.case"
    assert sc.schedule == {"swap_zip_loads": 0.8}
    assert sc.wind["owf1"](2.5) == pytest.approx(10.0)
    assert sc.breakers[0].state == "open"
    assert sc.overrides == {("owf1", "chopper_enabled"): "false"}


@pytest.mark.parametrize("extra,line", [
    ("[NOPE]\n", 6),
    ("[FAULT]\n5 1.0 0.1\n", 7),
    ("[SCHEDULE]\nwarp = 1\n", 7),
    ("[WIND owf1]\n0 fast\n", 7),
])
def test_errors_carry_line(extra, line):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(BASE + extra)
    assert info.value.line == line


def test_events_must_end_before_t_end():
    with pytest.raises(ScenarioError):
        parse_scenario(BASE + "[FAULT]\n5 1.95 0.1 0.01\n")


def test_case_is_required():
    with pytest.raises(ScenarioError):
        parse_scenario("[SCENARIO]\nt_end = 1\n")
