"""Sequential-initialization schedules for the bulk grid and the wind plants.

Bulk grid, default times::

    0.5 s  exciters on (machines replace their ideal sources)
    0.6 s  governors on (machines leave constant-speed mode)
    0.7 s  constant-power loads become ZIP loads
    1.0-1.9 s  grid-following references ramp from zero to their targets
    2.0 s  breakers of the ideal sources at grid-following buses open

Wind plant ``k`` connects its POI breaker at ``t0 + k * spacing`` and then
walks through four stages ``stage_step`` apart: close the converter
switch, enable the grid-side converter, start the turbine, enable the
rotor-side converter.
"""
from __future__ import annotations

from dataclasses import dataclass, field

BULK_ACTIONS = (
    "enable_exciters",
    "enable_governors",
    "swap_zip_loads",
    "ramp_ibr_refs",
    "open_source_breakers",
)
OWF_ACTIONS = ("connect_owf_poi", "close_owf_switch", "enable_gsc", "start_turbine", "enable_rsc")
ACTIONS = BULK_ACTIONS + OWF_ACTIONS

DEFAULT_BULK_TIMES = {
    "enable_exciters": 0.5,
    "enable_governors": 0.6,
    "swap_zip_loads": 0.7,
    "ramp_ibr_refs": 1.0,
    "ramp_ibr_end": 1.9,
    "open_source_breakers": 2.0,
}


class ScheduleError(Exception):
    pass


@dataclass(frozen=True, order=True)
class ScheduleAction:
    time: float
    target: str
    action: str
    until: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ScheduleError(f"unknown action {self.action!r}")
        if self.time < 0:
            raise ScheduleError(f"{self.action}: negative time")
        if self.until is not None and self.until < self.time:
            raise ScheduleError(f"{self.action}: window ends before it starts")


def default_bulk_schedule(case, **overrides):
    """Bulk-grid actions at the default times, each overridable by keyword.

    Keywords are the action names plus ``ramp_ibr_end``.  Actions with
    nothing to act on (no machines, loads or grid-following plants) are not
    emitted.
    """
    unknown = set(overrides) - set(DEFAULT_BULK_TIMES)
    if unknown:
        raise ScheduleError(f"unknown schedule keys {sorted(unknown)}")
    t = {**DEFAULT_BULK_TIMES, **overrides}
    out = []
    if case.sg_plants:
        out.append(ScheduleAction(t["enable_exciters"], "sg", "enable_exciters"))
        out.append(ScheduleAction(t["enable_governors"], "sg", "enable_governors"))
    if case.loads:
        out.append(ScheduleAction(t["swap_zip_loads"], "loads", "swap_zip_loads"))
    if case.gfl_plants:
        out.append(ScheduleAction(t["ramp_ibr_refs"], "gfl", "ramp_ibr_refs", until=t["ramp_ibr_end"]))
        out.append(ScheduleAction(t["open_source_breakers"], "gfl", "open_source_breakers"))
    return sorted(out)


def default_owf_schedule(plants, t0=10.0, spacing=2.0, stage_step=0.5, bulk_end=2.0):
    """Staggered energization of the wind plants.

    Parameters
    ----------
    plants : sequence of OwfPlant or of plant ids
    t0 : float
        POI connection time of the first plant.
    spacing : float
        Delay between consecutive plants' POI connections.
    stage_step : float
        Delay between the stages within one plant.
    bulk_end : float
        Completion time of the bulk schedule; ``t0`` may not precede it.
    """
    if t0 < bulk_end:
        raise ScheduleError(f"wind plants cannot connect before the bulk schedule ends ({t0} < {bulk_end})")
    if spacing < 0 or stage_step <= 0:
        raise ScheduleError("spacing must be >= 0 and stage_step > 0")
    out = []
    for k, plant in enumerate(plants):
        pid = getattr(plant, "id", plant)
        start = t0 + k * spacing
        for j, action in enumerate(OWF_ACTIONS):
            out.append(ScheduleAction(round(start + j * stage_step, 12), pid, action))
    return sorted(out)


def _first(actions, name, target=None):
    for a in actions:
        if a.action == name and (target is None or a.target == target):
            return a
    return None


def validate_schedule(actions, case=None):
    """Reject schedules that break the initialization order.

    Checks that exciters precede governors, that the reference ramp ends no
    later than the source breakers open, that every wind plant walks its
    stages in order with strictly increasing times, and that no plant
    connects before the bulk schedule has finished.  With ``case`` given,
    targets must name existing plants.
    """
    acts = sorted(actions)
    exc, gov = _first(acts, "enable_exciters"), _first(acts, "enable_governors")
    if exc and gov and gov.time < exc.time:
        raise ScheduleError("governors enabled before exciters")
    if gov and not exc:
        raise ScheduleError("governors enabled without exciters")
    ramp, opened = _first(acts, "ramp_ibr_refs"), _first(acts, "open_source_breakers")
    if opened and not ramp:
        raise ScheduleError("source breakers open without a reference ramp")
    if ramp and opened:
        if ramp.until is not None and ramp.until > opened.time:
            raise ScheduleError(
                f"reference ramp ends at {ramp.until} s, after the source breakers open at {opened.time} s"
            )
        if ramp.time > opened.time:
            raise ScheduleError("source breakers open before the reference ramp starts")
    bulk_times = [a.time for a in acts if a.action in BULK_ACTIONS]
    bulk_end = max(bulk_times) if bulk_times else 0.0
    owf_targets = []
    for a in acts:
        if a.action in OWF_ACTIONS and a.target not in owf_targets:
            owf_targets.append(a.target)
    for target in owf_targets:
        seq = [a for a in actions if a.target == target and a.action in OWF_ACTIONS]
        names = [a.action for a in seq]
        if sorted(names, key=OWF_ACTIONS.index) != names or len(set(names)) != len(names):
            raise ScheduleError(f"{target}: stages out of order {names}")
        if names != list(OWF_ACTIONS):
            raise ScheduleError(f"{target}: incomplete stage sequence {names}")
        times = [a.time for a in seq]
        if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
            raise ScheduleError(f"{target}: stage times not strictly increasing {times}")
        if times[0] < bulk_end:
            raise ScheduleError(f"{target}: connects at {times[0]} s before the bulk schedule ends at {bulk_end} s")
    if case is not None:
        owf_ids = {w.id for w in case.owf_plants}
        for target in owf_targets:
            if target not in owf_ids:
                raise ScheduleError(f"schedule targets unknown wind plant {target!r}")
    return acts


def execute_schedule(actions, sim):
    """Validate ``actions`` and queue them on a simulation.

    Each action is applied at the step boundary nearest to its time.  The
    returned list is the simulation's applied-events log; it fills in as
    the run advances.
    """
    acts = validate_schedule(actions, getattr(sim, "case", None))
    for a in acts:
        sim.queue_action(a)
    return sim.applied_log
