from dataclasses import replace

import pytest

from owf_emt import DATA_DIR
from owf_emt.case_model import load_case
from owf_emt.init_sequencer import (
    OWF_ACTIONS,
    ScheduleAction,
    ScheduleError,
    default_bulk_schedule,
    default_owf_schedule,
    validate_schedule,
)


@pytest.fixture(scope="module")
def case():
    return load_case(DATA_DIR / "nine_bus_two_owf.case")


def test_default_bulk_times(case):
    acts = {a.action: a for a in default_bulk_schedule(case)}
    assert acts["enable_exciters"].time == 0.5
    assert acts["enable_governors"].time == 0.6
    assert acts["swap_zip_loads"].time == 0.7
    assert (acts["ramp_ibr_refs"].time, acts["ramp_ibr_refs"].until) == (1.0, 1.9)
    assert acts["open_source_breakers"].time == 2.0


def test_case_without_grid_following_plants(case):
    acts = default_bulk_schedule(replace(case, gfl_plants=()))
    names = [a.action for a in acts]
    assert "ramp_ibr_refs" not in names and "open_source_breakers" not in names
    assert names[0] == "enable_exciters"


def test_bulk_override(case):
    acts = {a.action: a for a in default_bulk_schedule(case, swap_zip_loads=0.8)}
    assert acts["swap_zip_loads"].time == 0.8
    with pytest.raises(ScheduleError):
        default_bulk_schedule(case, no_such_step=1.0)


def test_two_plants_stagger(case):
    acts = default_owf_schedule(case.owf_plants)
    first = {a.target: a.time for a in acts if a.action == "connect_owf_poi"}
    assert first == {"owf1": 10.0, "owf2": 12.0}
    owf1 = [a for a in acts if a.target == "owf1"]
    assert [a.action for a in owf1] == list(OWF_ACTIONS)
    assert [a.time for a in owf1] == [10.0, 10.5, 11.0, 11.5, 12.0]
    validate_schedule(default_bulk_schedule(case) + acts, case)


def test_plants_cannot_precede_bulk_schedule(case):
    with pytest.raises(ScheduleError):
        default_owf_schedule(case.owf_plants, t0=1.5)


def test_permuted_stages_rejected(case):
    acts = default_owf_schedule(case.owf_plants[:1])
    times = [a.time for a in acts]
    swapped = [replace(a, time=times[1]) if a.action == "connect_owf_poi" else
               replace(a, time=times[0]) if a.action == "close_owf_switch" else a for a in acts]
    with pytest.raises(ScheduleError):
        validate_schedule(swapped)


def test_governors_need_exciters_first():
    with pytest.raises(ScheduleError):
        validate_schedule([ScheduleAction(0.5, "sg", "enable_governors"), ScheduleAction(0.6, "sg", "enable_exciters")])


def test_ramp_must_finish_before_breakers_open():
    with pytest.raises(ScheduleError):
        validate_schedule([ScheduleAction(1.0, "gfl", "ramp_ibr_refs", until=2.5),
                           ScheduleAction(2.0, "gfl", "open_source_breakers")])


def test_unknown_target_rejected(case):
    acts = default_owf_schedule(["owf9"])
    with pytest.raises(ScheduleError):
        validate_schedule(acts, case)


def test_unknown_action_rejected():
    with pytest.raises(ScheduleError):
        ScheduleAction(1.0, "x", "dance")
