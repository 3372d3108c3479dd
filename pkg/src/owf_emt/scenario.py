"""Scenario description and its sectioned text format.

Scenario file layout (same family as the case format)::

    [SCENARIO]
    case = nine_bus_two_owf.case      # relative to the scenario file
    dt = 50e-6
    t_end = 23
    record_every = 20                 # keep every 20th step
    channels = owf1.P_MW, owf1.V_poi  # optional; defaults per plant
    owf_t0 = 10
    owf_spacing = 2
    owf_stage_step = 0.5

    [SCHEDULE]                        # optional bulk-time overrides
    enable_exciters = 0.5

    [WIND owf1]                       # piecewise-linear (time s, speed m/s)
    0   9
    14  9

    [FAULT]                           # bus  t_on  duration  r_ohm
    5  15.0  0.15  0.01

    [BREAKER]                         # branch  state  time
    L45  open  3.0

    [OVERRIDES]                       # device.parameter = value
    owf1.chopper_enabled = false
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from pathlib import Path

from .emt_network import FaultSpec
from .init_sequencer import DEFAULT_BULK_TIMES


class ScenarioError(Exception):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class BreakerEvent:
    branch: str
    state: str
    time: float


@dataclass(frozen=True)
class WindProfile:
    points: tuple

    def __post_init__(self):
        if not self.points:
            raise ScenarioError("empty wind profile")
        times = [p[0] for p in self.points]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ScenarioError("wind profile times must be sorted")
        if any(p[1] < 0 for p in self.points):
            raise ScenarioError("wind speed must be non-negative")

    def __call__(self, t):
        return apply_wind_profile(self.points, t)


def apply_wind_profile(points, t):
    """Piecewise-linear interpolation, held flat outside the given points."""
    if not points:
        raise ScenarioError("empty wind profile")
    times = [p[0] for p in points]
    if t <= times[0]:
        return float(points[0][1])
    if t >= times[-1]:
        return float(points[-1][1])
    k = bisect.bisect_right(times, t)
    (t0, v0), (t1, v1) = points[k - 1], points[k]
    if t1 == t0:
        return float(v1)
    return v0 + (v1 - v0) * (t - t0) / (t1 - t0)


@dataclass
class Scenario:
    case_path: Path
    dt: float = 50e-6
    t_end: float = 1.0
    schedule: dict = field(default_factory=dict)
    owf_t0: float = 10.0
    owf_spacing: float = 2.0
    owf_stage_step: float = 0.5
    wind: dict = field(default_factory=dict)
    faults: list = field(default_factory=list)
    breakers: list = field(default_factory=list)
    channels: list | None = None
    record_every: int = 1
    overrides: dict = field(default_factory=dict)
    name: str = "scenario"

    def validate(self):
        if not self.dt > 0:
            raise ScenarioError("dt must be positive")
        if self.t_end < 0:
            raise ScenarioError("t_end must be non-negative")
        if self.record_every < 1:
            raise ScenarioError("record_every must be >= 1")
        unknown = set(self.schedule) - set(DEFAULT_BULK_TIMES)
        if unknown:
            raise ScenarioError(f"unknown schedule keys {sorted(unknown)}")
        if self.t_end > 0:
            last = max([f.t_on + f.duration for f in self.faults] + [b.time for b in self.breakers] + [0.0])
            if last >= self.t_end:
                raise ScenarioError(f"t_end ({self.t_end}) must exceed the last event time ({last})")
        return self


_SCALARS = {
    "dt": float, "t_end": float, "owf_t0": float, "owf_spacing": float,
    "owf_stage_step": float, "record_every": int,
}


def parse_scenario(text, base_dir="."):
    sc = {"wind": {}, "faults": [], "breakers": [], "schedule": {}, "overrides": {}}
    section, wind_target = None, None
    for ln, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                raise ScenarioError(f"malformed section header {body!r}", ln)
            head = body[1:-1].split()
            section = head[0].upper() if head else ""
            if section == "WIND":
                if len(head) != 2:
                    raise ScenarioError("[WIND] needs a plant id", ln)
                wind_target = head[1]
                if wind_target in sc["wind"]:
                    raise ScenarioError(f"duplicate wind profile for {wind_target}", ln)
                sc["wind"][wind_target] = []
            elif section not in ("SCENARIO", "SCHEDULE", "FAULT", "BREAKER", "OVERRIDES"):
                raise ScenarioError(f"unknown section [{section}]", ln)
            continue
        if section is None:
            raise ScenarioError("record outside of any section", ln)
        try:
            if section in ("SCENARIO", "SCHEDULE", "OVERRIDES"):
                if "=" not in body:
                    raise ScenarioError(f"expected key = value, got {body!r}", ln)
                key, _, val = (s.strip() for s in body.partition("="))
                if section == "SCENARIO":
                    if key == "case":
                        sc["case_path"] = Path(base_dir) / val
                    elif key == "channels":
                        sc["channels"] = [c.strip() for c in val.split(",") if c.strip()]
                    elif key == "name":
                        sc["name"] = val
                    elif key in _SCALARS:
                        sc[key] = _SCALARS[key](val)
                    else:
                        raise ScenarioError(f"unknown scenario key {key!r}", ln)
                elif section == "SCHEDULE":
                    if key not in DEFAULT_BULK_TIMES:
                        raise ScenarioError(f"unknown schedule key {key!r}", ln)
                    sc["schedule"][key] = float(val)
                else:
                    dev, dot, param = key.partition(".")
                    if not dot or not dev or not param:
                        raise ScenarioError(f"override must be device.parameter, got {key!r}", ln)
                    sc["overrides"][(dev, param)] = val
            elif section == "WIND":
                t, v = body.split()
                sc["wind"][wind_target].append((float(t), float(v)))
            elif section == "FAULT":
                tok = body.split()
                if len(tok) != 4:
                    raise ScenarioError("fault record is: bus t_on duration r_ohm", ln)
                sc["faults"].append(FaultSpec(int(tok[0]), float(tok[1]), float(tok[2]), float(tok[3])))
            elif section == "BREAKER":
                tok = body.split()
                if len(tok) != 3 or tok[1] not in ("open", "closed"):
                    raise ScenarioError("breaker record is: branch open|closed time", ln)
                sc["breakers"].append(BreakerEvent(tok[0], tok[1], float(tok[2])))
        except ValueError as exc:
            raise ScenarioError(str(exc), ln) from None
    if "case_path" not in sc:
        raise ScenarioError("scenario does not name a case file")
    sc["wind"] = {k: WindProfile(tuple(v)) for k, v in sc["wind"].items()}
    return Scenario(**sc).validate()


def load_scenario(path):
    path = Path(path)
    scenario = parse_scenario(path.read_text(encoding="utf-8"), path.parent)
    if scenario.name == "scenario":
        scenario.name = path.stem
    return scenario
