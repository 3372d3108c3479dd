"""Static grid description and the line-oriented case file format.

Case file layout
----------------
UTF-8 text, ``#`` starts a comment, blank lines are ignored.  Sections are
headed by ``[SYSTEM]``, ``[BUS]``, ``[BRANCH]``, ``[LOAD]``, ``[SG]``,
``[GFL]`` and ``[OWF]``.  One record per line, whitespace separated, fields
in the order below.  Trailing ``key=value`` tokens set optional parameters.

``[SYSTEM]``  ``mva_base <MVA>`` and ``nominal_hz <Hz>`` (defaults 100, 60)

``[BUS]``     ``id kv type area [v_set [angle_deg]]``
    type is ``slack``, ``PV`` or ``PQ``; ``v_set`` (pu) holds PV/slack
    magnitude, default 1.0.

``[BRANCH]``  ``id from to r x b [closed|open]``
    pi-section, per unit on the system base.

``[LOAD]``    ``id bus p0 q0 [z i p]``
    per unit on the system base at nominal voltage; ZIP shares default
    0.4/0.3/0.3 and must sum to one.

``[SG]``      ``id bus mva_base p h xd xq xd_p xq_p ra [key=value ...]``
    ``p`` is the dispatch in pu of the machine's own base; impedances and
    inertia on the machine base.  Keys: ``td0_p tq0_p d`` and the exciter
    (``exc_ka exc_ta exc_efd_max exc_efd_min``) and governor
    (``gov_r gov_tg gov_pmax gov_pmin gov_enabled``) parameters.

``[GFL]``     ``id bus mva_base p_ref q_ref [key=value ...]``
    references on the plant base.  Keys are :class:`GflPlant` fields.

``[OWF]``     ``id poi_bus n_turbines [key=value ...]``
    keys are :class:`OwfPlant` fields (``turbine_mw cut_in cut_out r_col
    x_col b_col``) or :class:`OwfParams` fields; collector data and all
    control parameters are per unit on the plant base (n x turbine rating).

Network data (branches, loads) are stored on the system base; device
parameters stay on each device's own base, which the record carries.
"""
from __future__ import annotations

import math
import shlex
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

BUS_TYPES = ("slack", "PV", "PQ")
SECTIONS = ("SYSTEM", "BUS", "BRANCH", "LOAD", "SG", "GFL", "OWF")


class CaseError(Exception):
    """Malformed case text; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Bus:
    id: int
    nominal_kv: float
    type: str
    area: int = 1
    v_set: float = 1.0
    angle_deg: float = 0.0


@dataclass(frozen=True)
class Branch:
    id: str
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_shunt: float = 0.0
    breaker_state: str = "closed"


@dataclass(frozen=True)
class ZipLoad:
    id: str
    bus: int
    p0: float
    q0: float
    z_frac: float = 0.4
    i_frac: float = 0.3
    p_frac: float = 0.3


@dataclass(frozen=True)
class ExciterParams:
    ka: float = 50.0
    ta: float = 0.05
    efd_max: float = 5.0
    efd_min: float = -4.0


@dataclass(frozen=True)
class GovernorParams:
    r: float = 0.05
    tg: float = 0.5
    pmax: float = 1.2
    pmin: float = 0.0
    enabled: bool = True


@dataclass(frozen=True)
class SgPlant:
    id: str
    bus: int
    mva_base: float
    p: float
    h: float
    xd: float
    xq: float
    xd_p: float
    xq_p: float
    ra: float
    td0_p: float = 8.0
    tq0_p: float = 0.4
    d: float = 2.0
    exciter: ExciterParams = field(default_factory=ExciterParams)
    governor: GovernorParams = field(default_factory=GovernorParams)


@dataclass(frozen=True)
class GflPlant:
    id: str
    bus: int
    mva_base: float
    p_ref: float
    q_ref: float
    freq_deadband: float = 0.017
    volt_deadband: float = 0.01
    kf: float = 20.0
    kv: float = 20.0
    i_max: float = 1.1
    t_current: float = 0.02
    t_vmeas: float = 0.01
    pll_bw_hz: float = 20.0
    pll_zeta: float = 0.707


@dataclass(frozen=True)
class OwfParams:
    """Turbine, converter and control parameters of one aggregated plant."""

    rotor_radius: float = 40.0
    air_density: float = 1.225
    h_turbine: float = 4.0
    cp_c1: float = 0.5176
    cp_c2: float = 116.0
    cp_c3: float = 0.4
    cp_c4: float = 5.0
    cp_c5: float = 21.0
    cp_c6: float = 0.0068
    omega_min: float = 0.3
    omega_max: float = 1.0
    k_opt: float = 1.0
    pitch_kp: float = 150.0
    pitch_ki: float = 30.0
    pitch_rate: float = 10.0
    pitch_max: float = 45.0
    c_dc: float = 0.02
    v_dc_ref: float = 1.0
    chopper_enabled: bool = True
    chopper_on: float = 1.05
    chopper_off: float = 1.02
    chopper_power: float = 1.0
    dc_trip: float = 1.1
    x_f: float = 0.15
    r_f: float = 0.003
    x_s: float = 0.4
    r_s: float = 0.005
    i_max: float = 1.1
    gsc_cc_kp: float = 0.5
    gsc_cc_ki: float = 3.77
    rsc_cc_kp: float = 1.333
    rsc_cc_ki: float = 6.28
    vdc_kp: float = 1.8
    vdc_ki: float = 80.0
    vdc_polarity: float = -1.0
    vac_kp: float = 0.0
    vac_ki: float = 20.0
    vac_polarity: float = -1.0
    q_kp: float = 0.3
    q_ki: float = 30.0
    q_polarity: float = -1.0
    q_max: float = 0.4
    p_kp: float = 0.2
    p_ki: float = 120.0
    vrsc_kp: float = 0.5
    vrsc_ki: float = 50.0
    vrsc_polarity: float = -1.0
    p_ramp: float = 1.0
    lvrt_v_low: float = 0.3
    lvrt_v_high: float = 0.9
    t_lvrt: float = 0.005
    t_vac: float = 0.02
    pll_bw_hz: float = 20.0
    pll_zeta: float = 0.707


@dataclass(frozen=True)
class OwfPlant:
    id: str
    poi_bus: int
    n_turbines: int
    turbine_mw: float = 2.0
    cut_in: float = 4.0
    cut_out: float = 25.0
    r_col: float = 0.005
    x_col: float = 0.1
    b_col: float = 0.02
    params: OwfParams = field(default_factory=OwfParams)

    @property
    def mva_base(self):
        return self.n_turbines * self.turbine_mw


@dataclass(frozen=True)
class SystemCase:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...] = ()
    loads: tuple[ZipLoad, ...] = ()
    sg_plants: tuple[SgPlant, ...] = ()
    gfl_plants: tuple[GflPlant, ...] = ()
    owf_plants: tuple[OwfPlant, ...] = ()
    system_mva_base: float = 100.0
    nominal_hz: float = 60.0

    def bus(self, bus_id):
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(bus_id)

    def device(self, device_id):
        for group in (self.branches, self.loads, self.sg_plants, self.gfl_plants, self.owf_plants):
            for dev in group:
                if dev.id == device_id:
                    return dev
        raise KeyError(device_id)

    def z_base_ohm(self, bus_id):
        return self.bus(bus_id).nominal_kv ** 2 / self.system_mva_base


def rebase(value, from_mva, to_mva, kind="power"):
    """Convert a per-unit value between MVA bases at a common voltage base.

    Power-type quantities (P, Q, S, current) scale by ``from/to``;
    impedance-type quantities scale by ``to/from``; admittances like power.
    """
    if not (from_mva > 0 and to_mva > 0):
        raise ValueError("MVA bases must be positive")
    if kind in ("power", "admittance", "current"):
        return value * from_mva / to_mva
    if kind == "impedance":
        return value * to_mva / from_mva
    raise ValueError(f"unknown quantity kind {kind!r}")


# ---------------------------------------------------------------- parsing
def _num(token, line, what):
    try:
        return float(token)
    except ValueError:
        raise CaseError(f"expected a number for {what}, got {token!r}", line) from None


def _int(token, line, what):
    try:
        return int(token)
    except ValueError:
        raise CaseError(f"expected an integer for {what}, got {token!r}", line) from None


def _coerce(cls, key, raw, line):
    types = {f.name: f.type for f in fields(cls)}
    if key not in types:
        raise CaseError(f"unknown parameter {key!r}", line)
    kind = types[key]
    if kind in ("bool", bool):
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise CaseError(f"expected a boolean for {key}, got {raw!r}", line)
    if kind in ("int", int):
        return _int(raw, line, key)
    return _num(raw, line, key)


def _split_kv(tokens, line):
    positional, options = [], {}
    for tok in tokens:
        if "=" in tok:
            key, _, raw = tok.partition("=")
            if key in options:
                raise CaseError(f"parameter {key!r} given twice", line)
            options[key] = raw
        elif options:
            raise CaseError("positional field after key=value parameters", line)
        else:
            positional.append(tok)
    return positional, options


def _expect(positional, lo, hi, line, section):
    if not lo <= len(positional) <= hi:
        want = str(lo) if lo == hi else f"{lo}..{hi}"
        raise CaseError(f"[{section}] record needs {want} fields, got {len(positional)}", line)


def _parse_bus(pos, opts, ln):
    _expect(pos, 4, 6, ln, "BUS")
    if opts:
        raise CaseError("[BUS] takes no key=value parameters", ln)
    btype = pos[2] if pos[2] in BUS_TYPES else pos[2].upper() if pos[2].upper() in BUS_TYPES else pos[2].lower()
    if btype not in BUS_TYPES:
        raise CaseError(f"bus type must be one of {BUS_TYPES}, got {pos[2]!r}", ln)
    kv = _num(pos[1], ln, "nominal_kv")
    if not kv > 0:
        raise CaseError("nominal_kv must be positive", ln)
    return Bus(
        id=_int(pos[0], ln, "bus id"),
        nominal_kv=kv,
        type=btype,
        area=_int(pos[3], ln, "area"),
        v_set=_num(pos[4], ln, "v_set") if len(pos) > 4 else 1.0,
        angle_deg=_num(pos[5], ln, "angle") if len(pos) > 5 else 0.0,
    )


def _parse_branch(pos, opts, ln):
    _expect(pos, 6, 7, ln, "BRANCH")
    state = pos[6] if len(pos) > 6 else "closed"
    if state not in ("closed", "open"):
        raise CaseError(f"breaker state must be closed/open, got {state!r}", ln)
    r, x = _num(pos[3], ln, "r"), _num(pos[4], ln, "x")
    if r < 0 or (r == 0 and x == 0):
        raise CaseError("branch needs r >= 0 and a nonzero impedance", ln)
    return Branch(pos[0], _int(pos[1], ln, "from bus"), _int(pos[2], ln, "to bus"), r, x, _num(pos[5], ln, "b"), state)


def _parse_load(pos, opts, ln):
    _expect(pos, 4, 7, ln, "LOAD")
    if len(pos) not in (4, 7):
        raise CaseError("[LOAD] needs either no ZIP shares or all three", ln)
    shares = [_num(t, ln, "ZIP share") for t in pos[4:7]] or [0.4, 0.3, 0.3]
    if any(s < 0 for s in shares) or abs(sum(shares) - 1.0) > 1e-9:
        raise CaseError(f"ZIP shares must be non-negative and sum to 1, got {shares}", ln)
    return ZipLoad(pos[0], _int(pos[1], ln, "bus"), _num(pos[2], ln, "p0"), _num(pos[3], ln, "q0"), *shares)


def _parse_sg(pos, opts, ln):
    _expect(pos, 10, 10, ln, "SG")
    vals = [_num(t, ln, "SG field") for t in pos[2:]]
    mva, p, h, xd, xq, xd_p, xq_p, ra = vals
    exc, gov, top = {}, {}, {}
    for key, raw in opts.items():
        if key.startswith("exc_"):
            exc[key[4:]] = _coerce(ExciterParams, key[4:], raw, ln)
        elif key.startswith("gov_"):
            gov[key[4:]] = _coerce(GovernorParams, key[4:], raw, ln)
        elif key in ("td0_p", "tq0_p", "d"):
            top[key] = _num(raw, ln, key)
        else:
            raise CaseError(f"unknown SG parameter {key!r}", ln)
    if not mva > 0:
        raise CaseError("SG mva_base must be positive", ln)
    if not h > 0:
        raise CaseError("SG inertia h must be positive", ln)
    if not (xd >= xd_p > 0 and xq >= xq_p > 0):
        raise CaseError("SG reactances need xd >= xd' > 0 and xq >= xq' > 0", ln)
    return SgPlant(
        pos[0], _int(pos[1], ln, "bus"), mva, p, h, xd, xq, xd_p, xq_p, ra,
        exciter=ExciterParams(**exc), governor=GovernorParams(**gov), **top,
    )


def _parse_gfl(pos, opts, ln):
    _expect(pos, 5, 5, ln, "GFL")
    kw = {k: _coerce(GflPlant, k, v, ln) for k, v in opts.items()}
    plant = GflPlant(pos[0], _int(pos[1], ln, "bus"), _num(pos[2], ln, "mva_base"),
                     _num(pos[3], ln, "p_ref"), _num(pos[4], ln, "q_ref"), **kw)
    if not plant.mva_base > 0:
        raise CaseError("GFL mva_base must be positive", ln)
    if plant.freq_deadband < 0 or plant.volt_deadband < 0:
        raise CaseError("deadbands must be non-negative", ln)
    if abs(plant.p_ref) > 1.0:
        raise CaseError("|p_ref| must not exceed 1 pu on the plant base", ln)
    return plant


def _parse_owf(pos, opts, ln):
    _expect(pos, 3, 3, ln, "OWF")
    top_names = {f.name for f in fields(OwfPlant)} - {"id", "poi_bus", "n_turbines", "params"}
    top, par = {}, {}
    for key, raw in opts.items():
        if key in top_names:
            top[key] = _num(raw, ln, key)
        else:
            par[key] = _coerce(OwfParams, key, raw, ln)
    n = _int(pos[2], ln, "n_turbines")
    if n < 1:
        raise CaseError("n_turbines must be at least 1", ln)
    plant = OwfPlant(pos[0], _int(pos[1], ln, "poi bus"), n, params=OwfParams(**par), **top)
    if not 0 < plant.cut_in < plant.cut_out:
        raise CaseError("need 0 < cut_in < cut_out", ln)
    return plant


_PARSERS = {
    "BUS": ("buses", _parse_bus),
    "BRANCH": ("branches", _parse_branch),
    "LOAD": ("loads", _parse_load),
    "SG": ("sg_plants", _parse_sg),
    "GFL": ("gfl_plants", _parse_gfl),
    "OWF": ("owf_plants", _parse_owf),
}


def parse_case(text):
    """Parse case-file text into a :class:`SystemCase`.

    Raises
    ------
    CaseError
        On syntax errors, duplicate ids or references to unknown buses; the
        message carries the line number.
    """
    records = {name: [] for name, _ in _PARSERS.values()}
    lines_of = {}
    system = {"mva_base": 100.0, "nominal_hz": 60.0}
    section = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                raise CaseError(f"malformed section header {body!r}", ln)
            section = body[1:-1].strip().upper()
            if section not in SECTIONS:
                raise CaseError(f"unknown section [{section}]", ln)
            continue
        if section is None:
            raise CaseError("record outside of any section", ln)
        tokens = shlex.split(body, posix=True)
        if section == "SYSTEM":
            if len(tokens) != 2 or tokens[0] not in system:
                raise CaseError(f"[SYSTEM] expects 'mva_base <v>' or 'nominal_hz <v>', got {body!r}", ln)
            system[tokens[0]] = _num(tokens[1], ln, tokens[0])
            if not system[tokens[0]] > 0:
                raise CaseError(f"{tokens[0]} must be positive", ln)
            continue
        pos, opts = _split_kv(tokens, ln)
        attr, parser = _PARSERS[section]
        rec = parser(pos, opts, ln)
        records[attr].append(rec)
        lines_of[(attr, rec.id)] = ln

    bus_ids = set()
    for b in records["buses"]:
        if b.id in bus_ids:
            raise CaseError(f"duplicate bus id {b.id}", lines_of[("buses", b.id)])
        bus_ids.add(b.id)
    device_ids = set()
    for attr in ("branches", "loads", "sg_plants", "gfl_plants", "owf_plants"):
        for rec in records[attr]:
            ln = lines_of[(attr, rec.id)]
            if rec.id in device_ids:
                raise CaseError(f"duplicate id {rec.id!r}", ln)
            device_ids.add(rec.id)
            refs = (rec.from_bus, rec.to_bus) if attr == "branches" else (
                (rec.poi_bus,) if attr == "owf_plants" else (rec.bus,))
            for ref in refs:
                if ref not in bus_ids:
                    raise CaseError(f"unknown bus reference {ref} in {rec.id!r}", ln)
    if not records["buses"]:
        raise CaseError("case defines no buses")
    return SystemCase(
        buses=tuple(records["buses"]),
        branches=tuple(records["branches"]),
        loads=tuple(records["loads"]),
        sg_plants=tuple(records["sg_plants"]),
        gfl_plants=tuple(records["gfl_plants"]),
        owf_plants=tuple(records["owf_plants"]),
        system_mva_base=system["mva_base"],
        nominal_hz=system["nominal_hz"],
    )


def load_case(path):
    return parse_case(Path(path).read_text(encoding="utf-8"))


# ------------------------------------------------------------ serializing
def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _options(obj, defaults, prefix=""):
    out = []
    for f in fields(obj):
        val = getattr(obj, f.name)
        if val != getattr(defaults, f.name):
            out.append(f"{prefix}{f.name}={_fmt(val)}")
    return out


def serialize_case(case):
    """Render a :class:`SystemCase` back to case-file text (lossless)."""
    out = [
        "[SYSTEM]",
        f"mva_base {_fmt(case.system_mva_base)}",
        f"nominal_hz {_fmt(case.nominal_hz)}",
        "",
        "[BUS]",
    ]
    for b in case.buses:
        out.append(" ".join(map(_fmt, (b.id, b.nominal_kv, b.type, b.area, b.v_set, b.angle_deg))))
    out += ["", "[BRANCH]"]
    for br in case.branches:
        out.append(" ".join(map(_fmt, (br.id, br.from_bus, br.to_bus, br.r, br.x, br.b_shunt, br.breaker_state))))
    out += ["", "[LOAD]"]
    for ld in case.loads:
        out.append(" ".join(map(_fmt, (ld.id, ld.bus, ld.p0, ld.q0, ld.z_frac, ld.i_frac, ld.p_frac))))
    out += ["", "[SG]"]
    base_sg = SgPlant("", 0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0)
    for sg in case.sg_plants:
        head = (sg.id, sg.bus, sg.mva_base, sg.p, sg.h, sg.xd, sg.xq, sg.xd_p, sg.xq_p, sg.ra)
        opts = [f"{k}={_fmt(getattr(sg, k))}" for k in ("td0_p", "tq0_p", "d") if getattr(sg, k) != getattr(base_sg, k)]
        opts += _options(sg.exciter, ExciterParams(), "exc_") + _options(sg.governor, GovernorParams(), "gov_")
        out.append(" ".join([*map(_fmt, head), *opts]))
    out += ["", "[GFL]"]
    for g in case.gfl_plants:
        head = (g.id, g.bus, g.mva_base, g.p_ref, g.q_ref)
        defaults = GflPlant(g.id, g.bus, g.mva_base, g.p_ref, g.q_ref)
        out.append(" ".join([*map(_fmt, head), *_options(g, defaults)]))
    out += ["", "[OWF]"]
    for w in case.owf_plants:
        defaults = OwfPlant(w.id, w.poi_bus, w.n_turbines)
        opts = [f"{k}={_fmt(getattr(w, k))}" for k in ("turbine_mw", "cut_in", "cut_out", "r_col", "x_col", "b_col")
                if getattr(w, k) != getattr(defaults, k)]
        opts += _options(w.params, OwfParams())
        out.append(" ".join([*map(_fmt, (w.id, w.poi_bus, w.n_turbines)), *opts]))
    return "\n".join(out) + "\n"


# ------------------------------------------------------------- validation
@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        return "case is valid" if self.ok else "\n".join(self.violations)


def islands(case):
    """Connected bus groups over closed branches (sorted lists of bus ids)."""
    parent = {b.id: b.id for b in case.buses}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for br in case.branches:
        if br.breaker_state == "closed" and br.from_bus in parent and br.to_bus in parent:
            parent[find(br.from_bus)] = find(br.to_bus)
    groups = {}
    for b in case.buses:
        groups.setdefault(find(b.id), []).append(b.id)
    return sorted(sorted(g) for g in groups.values())


def validate_case(case):
    """Collect structural violations; an empty report means the case can run."""
    report = ValidationReport()
    v = report.violations
    bus_ids = [b.id for b in case.buses]
    if len(set(bus_ids)) != len(bus_ids):
        v.append("duplicate bus ids")
    known = set(bus_ids)
    types = {b.id: b.type for b in case.buses}
    for b in case.buses:
        if not b.nominal_kv > 0:
            v.append(f"bus {b.id}: nominal_kv must be positive")
    for br in case.branches:
        for ref in (br.from_bus, br.to_bus):
            if ref not in known:
                v.append(f"branch {br.id}: unknown bus {ref}")
        if br.r < 0 or (br.r == 0 and br.x == 0):
            v.append(f"branch {br.id}: nonpositive impedance")
        if br.from_bus == br.to_bus:
            v.append(f"branch {br.id}: both ends on bus {br.from_bus}")
    for dev in (*case.loads, *case.sg_plants, *case.gfl_plants):
        if dev.bus not in known:
            v.append(f"{dev.id}: unknown bus {dev.bus}")
    for ld in case.loads:
        shares = (ld.z_frac, ld.i_frac, ld.p_frac)
        if min(shares) < 0 or abs(sum(shares) - 1.0) > 1e-9:
            v.append(f"load {ld.id}: ZIP shares must be non-negative and sum to 1")
    for w in case.owf_plants:
        if w.poi_bus not in known:
            v.append(f"{w.id}: unknown POI bus {w.poi_bus}")
        if w.n_turbines < 1:
            v.append(f"{w.id}: n_turbines must be >= 1")
        if not 0 < w.cut_in < w.cut_out:
            v.append(f"{w.id}: need 0 < cut_in < cut_out")
        if w.r_col < 0 or w.x_col <= 0 or w.b_col < 0:
            v.append(f"{w.id}: nonpositive collector impedance")
    for sg in case.sg_plants:
        if not sg.h > 0:
            v.append(f"{sg.id}: inertia must be positive")
        if not sg.xd >= sg.xd_p > 0 or not sg.xq >= sg.xq_p > 0:
            v.append(f"{sg.id}: need xd >= xd' > 0 and xq >= xq' > 0")
        if types.get(sg.bus) == "PQ":
            v.append(f"{sg.id}: synchronous generator on PQ bus {sg.bus}")
    for g in case.gfl_plants:
        if g.freq_deadband < 0 or g.volt_deadband < 0:
            v.append(f"{g.id}: negative deadband")
        if abs(g.p_ref) > 1.0:
            v.append(f"{g.id}: |p_ref| exceeds 1 pu")
    sg_buses = {sg.bus for sg in case.sg_plants}
    for b in case.buses:
        if b.type in ("slack", "PV") and b.id not in sg_buses:
            v.append(f"bus {b.id}: {b.type} bus without a synchronous generator")
    if any(m.startswith("duplicate") or "unknown bus" in m for m in v):
        return report
    groups = islands(case)
    if len(groups) > 1:
        v.append(f"network is islanded into {len(groups)} parts: {groups}")
    for g in groups:
        n_slack = sum(1 for b in g if types[b] == "slack")
        if n_slack == 0:
            v.append(f"island {g} has no slack bus")
        elif n_slack > 1:
            v.append(f"island {g} has {n_slack} slack buses")
    return report


def with_overrides(case, overrides):
    """Return a copy with ``{(device_id, param): value}`` replaced.

    Parameters are looked up on the device record first and then on its
    nested parameter blocks (``params``, ``exciter``, ``governor``).
    """
    groups = ("branches", "loads", "sg_plants", "gfl_plants", "owf_plants")
    changed = {g: list(getattr(case, g)) for g in groups}
    for (dev_id, key), raw in overrides.items():
        for g in groups:
            for k, dev in enumerate(changed[g]):
                if dev.id != dev_id:
                    continue
                changed[g][k] = _override_one(dev, key, raw)
                break
            else:
                continue
            break
        else:
            raise CaseError(f"override targets unknown device {dev_id!r}")
    return replace(case, **{g: tuple(v) for g, v in changed.items()})


def _override_one(dev, key, raw):
    names = {f.name for f in fields(dev)}
    if key in names and key not in ("params", "exciter", "governor"):
        value = _coerce(type(dev), key, str(raw), None) if not isinstance(raw, (int, float, bool)) else raw
        return replace(dev, **{key: value})
    for nested, prefix in (("params", ""), ("exciter", "exc_"), ("governor", "gov_")):
        if nested in names and key.startswith(prefix):
            sub = getattr(dev, nested)
            sub_key = key[len(prefix):]
            if sub_key in {f.name for f in fields(sub)}:
                value = _coerce(type(sub), sub_key, str(raw), None) if not isinstance(raw, (int, float, bool)) else raw
                return replace(dev, **{nested: replace(sub, **{sub_key: value})})
    raise CaseError(f"device {dev.id!r} has no parameter {key!r}")


def total_generation_mw(case):
    """Installed capacity in MW over all plants (SG, GFL and OWF)."""
    return (
        sum(sg.mva_base for sg in case.sg_plants)
        + sum(g.mva_base for g in case.gfl_plants)
        + sum(w.mva_base for w in case.owf_plants)
    )


def nominal_omega(case):
    return 2.0 * math.pi * case.nominal_hz
