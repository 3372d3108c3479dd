"""Fixed-step simulation loop: network build, device coupling, events, recording.

Everything inside the loop is on the system MVA base with time in seconds.
Each step runs in this order:

1. apply the schedule actions, switch events and breaker events due at
   the step start;
2. collect the device Norton injections for the step;
3. solve the network;
4. hand the solved voltages back to the devices and meters, then record.

Recorded samples sit on step boundaries ``n * dt``.  With ``record_every``
set, every k-th sample is kept and the rest are dropped.
"""
from __future__ import annotations

import cmath
import hashlib
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .case_model import load_case, validate_case, with_overrides
from .emt_network import (
    NetworkError, NodalSystem, SwitchEvent, step_index, three_phase,
)
from .gfl_ibr import GflInverter
from .init_sequencer import (
    ScheduleAction, default_bulk_schedule, default_owf_schedule, execute_schedule,
)
from .machines import MachineError, SgMode, SyncMachine
from .owf import OwfError, OwfModel
from .powerflow import snapshot_for_emt, solve_powerflow
from .recording import MeanMeter, Recording, RmsMeter
from .scenario import BreakerEvent, ScenarioError, WindProfile
from .transforms import abc_to_vec, vec_to_abc

DEFAULT_WIND = 10.0
LOAD_LOW_V = 0.7  # below this fraction of V0 the P and I parts behave as Z
LOAD_T_MEAS = 0.02  # voltage-magnitude filter of the load admittance, s
OWF_CHANNELS = ("P_MW", "Q_Mvar", "P_inst", "Q_inst", "V_poi", "wind", "Vdc", "omega", "beta", "P_chopper", "dc_residual", "P_gsc")
SG_CHANNELS = ("speed", "Pe", "efd", "pm")
GFL_CHANNELS = ("P", "Q", "freq", "dp")
BUS_CHANNELS = ("V",)


class SimulationError(Exception):
    """Numerical or modelling failure during a run; ``time`` is when it happened."""

    def __init__(self, message, time=None):
        self.time = time
        super().__init__(f"t = {time:.6f} s: {message}" if time is not None else message)


@dataclass
class _Load:
    rec: object
    nodes: tuple
    v0: float
    s0: complex
    y0: complex  # conj(S0) / V0**2, the equivalent admittance at V0
    zip_mode: bool = False
    v_meas: float = 1.0


@dataclass
class _Owf:
    model: OwfModel
    poi_nodes: tuple
    term_nodes: tuple
    switch_group: str
    shunt_ids: list
    wind: object


@dataclass
class _Gfl:
    inv: GflInverter
    nodes: tuple
    switch_group: str
    source_ids: list
    phasor: complex


@dataclass
class _Sg:
    machine: SyncMachine
    nodes: tuple
    shunt_ids: list


@dataclass
class RunLog:
    applied: list = field(default_factory=list)
    lines: list = field(default_factory=list)


class Simulation:
    """One simulation run of a case.

    Parameters
    ----------
    case : SystemCase
    dt : float
        Step in seconds.
    wind : dict, optional
        Plant id to callable ``t -> m/s``; missing plants see a constant
        10 m/s.
    snapshot : InitSnapshot, optional
        Defaults to the power-flow snapshot of ``case``.
    """

    def __init__(self, case, dt, wind=None, snapshot=None):
        self.case = case
        self.dt = float(dt)
        self.wb = 2.0 * math.pi * case.nominal_hz
        if snapshot is None:
            snapshot = snapshot_for_emt(solve_powerflow(case), case)
        self.snapshot = snapshot
        self.wind = dict(wind or {})
        self.log = RunLog()
        self.applied_log = self.log.applied
        self._queue = []
        self._n = 0
        self._a_load = 1.0 - math.exp(-self.dt / LOAD_T_MEAS)
        self._rot = cmath.exp(1j * self.wb * self.dt)
        self.net = NodalSystem(self.dt)
        self._build()
        self._initialize()

    # ----------------------------------------------------------------- build
    def _build(self):
        case, net, wb = self.case, self.net, self.wb
        s_base = case.system_mva_base
        for b in case.buses:
            net.add_bus(b.id, case.z_base_ohm(b.id))
        self.branch_ids = {}
        self._caps = []
        for br in case.branches:
            ids = three_phase(net, "RL", {"r": br.r, "l": br.x / wb},
                              net.bus_nodes[br.from_bus], net.bus_nodes[br.to_bus])
            self.branch_ids[br.id] = ids
            if br.b_shunt > 0:
                for bus in (br.from_bus, br.to_bus):
                    cids = three_phase(net, "C", br.b_shunt / 2.0 / wb, net.bus_nodes[bus])
                    self._caps.append((bus, br.b_shunt / 2.0, cids))
            if br.breaker_state != "closed":
                for eid in ids:
                    net.set_enabled(eid, False)

        self.loads = []
        for ld in case.loads:
            v0 = self.snapshot.buses[ld.bus].magnitude
            s0 = complex(ld.p0, ld.q0)
            nodes = net.bus_nodes[ld.bus]
            load = _Load(ld, nodes, v0, s0, s0.conjugate() / v0 ** 2, v_meas=v0)
            load.g_ids = three_phase(net, "shunt", ld.p0 / v0 ** 2, nodes) if ld.p0 > 0 else []
            load.x_ids = []
            if ld.q0 > 0:
                load.x_ids = three_phase(net, "L", v0 ** 2 / ld.q0 / wb, nodes)
            elif ld.q0 < 0:
                load.x_ids = three_phase(net, "C", -ld.q0 / v0 ** 2 / wb, nodes)
            self.loads.append(load)

        self.sgs = []
        for p in case.sg_plants:
            m = SyncMachine(p, s_base, wb, self.dt)
            nodes = net.bus_nodes[p.bus]
            self.sgs.append(_Sg(m, nodes, three_phase(net, "shunt", m.conductance, nodes)))

        self.gfls = []
        for p in case.gfl_plants:
            inv = GflInverter(p, s_base, wb, case.nominal_hz, self.dt)
            nodes = net.bus_nodes[p.bus]
            src_nodes = net.add_node(3)
            src = three_phase(net, "ideal-source", 0.0, src_nodes)
            sw = three_phase(net, "switch", {"state": "closed"}, src_nodes, nodes)
            name = f"{p.id}.source_breaker"
            net.register_group(name, sw)
            self.gfls.append(_Gfl(inv, nodes, name, src, self.snapshot.phasor(p.bus)))

        self.owfs = []
        for p in case.owf_plants:
            model = OwfModel(p, s_base, wb, self.dt)
            scale = p.mva_base / s_base
            poi = net.bus_nodes[p.poi_bus]
            col = net.add_node(3)
            term = net.add_node(3)
            sw = three_phase(net, "switch", {"state": "open"}, poi, col)
            name = f"{p.id}.poi_breaker"
            net.register_group(name, sw)
            three_phase(net, "RL", {"r": p.r_col / scale, "l": p.x_col / scale / wb}, col, term)
            if p.b_col > 0:
                three_phase(net, "C", p.b_col * scale / wb, term)
            shunt = three_phase(net, "shunt", 0.0, term)
            wind = self.wind.get(p.id, WindProfile(((0.0, DEFAULT_WIND),)))
            self.owfs.append(_Owf(model, poi, term, name, shunt, wind))

        self.bus_index = {b.id: np.array(net.bus_nodes[b.id]) for b in case.buses}

    def _initialize(self):
        """Seed node voltages and companion histories from the snapshot phasors."""
        net, snap, case = self.net, self.snapshot, self.case
        v = np.zeros(net.n)
        for b in case.buses:
            v[list(net.bus_nodes[b.id])] = vec_to_abc(snap.phasor(b.id))
        for g in self.gfls:
            for eid, val in zip(g.source_ids, vec_to_abc(g.phasor)):
                v[net.elements[eid].a] = val
                net.set_source(eid, val)
        net.set_voltages(v)
        for br in case.branches:
            if br.breaker_state != "closed":
                continue
            vi, vj = snap.phasor(br.from_bus), snap.phasor(br.to_bus)
            i = (vi - vj) / complex(br.r, br.x)
            for eid, ip, up in zip(self.branch_ids[br.id], vec_to_abc(i), vec_to_abc(vi - vj)):
                net.initialize_state(eid, ip, up)
        for bus, b_half, cids in self._caps:
            vb = snap.phasor(bus)
            for eid, ip, up in zip(cids, vec_to_abc(1j * b_half * vb), vec_to_abc(vb)):
                net.initialize_state(eid, ip, up)
        for ld in self.loads:
            vb = snap.phasor(ld.rec.bus)
            if ld.x_ids:
                y = -1j * ld.rec.q0 / ld.v0 ** 2
                for eid, ip, up in zip(ld.x_ids, vec_to_abc(y * vb), vec_to_abc(vb)):
                    net.initialize_state(eid, ip, up)
        s_base = case.system_mva_base
        for sg in self.sgs:
            p = sg.machine.plant
            vb = snap.phasor(p.bus)
            pe, qe = snap.device_targets[p.id]
            i = (complex(pe, qe) / vb).conjugate()
            sg.machine.initialize(vb, i, 0.0)
        for g in self.gfls:
            g.inv.initialize(g.phasor, 0.0)
        self._s_base = s_base

    # ---------------------------------------------------------------- events
    def queue_action(self, action: ScheduleAction):
        self._queue.append((step_index(action.time, self.dt), 0, action))
        self._queue.sort(key=lambda e: (e[0], e[1], _order(e[2])))

    def queue_switch(self, event: SwitchEvent):
        self._queue.append((step_index(event.time, self.dt), 1, event))
        self._queue.sort(key=lambda e: (e[0], e[1], _order(e[2])))

    def queue_breaker(self, event: BreakerEvent):
        if event.branch not in self.branch_ids:
            raise SimulationError(f"breaker event on unknown branch {event.branch!r}")
        self._queue.append((step_index(event.time, self.dt), 2, event))
        self._queue.sort(key=lambda e: (e[0], e[1], _order(e[2])))

    def add_fault(self, spec):
        on, off = self.net.apply_fault(spec)
        self.queue_switch(on)
        self.queue_switch(off)

    def _apply_due(self, n):
        t = n * self.dt
        while self._queue and self._queue[0][0] <= n:
            _, kind, ev = self._queue.pop(0)
            if kind == 0:
                self._apply_action(ev, t)
                self.log.applied.append((t, ev.target, ev.action))
            elif kind == 1:
                self.net.apply_switch(ev)
                self.log.applied.append((t, str(ev.element), f"switch {ev.state}"))
            else:
                for eid in self.branch_ids[ev.branch]:
                    self.net.set_enabled(eid, ev.state == "closed")
                self.log.applied.append((t, ev.branch, f"breaker {ev.state}"))

    def _apply_action(self, a, t):
        net, v = self.net, self.net.v
        if a.action == "enable_exciters":
            for sg in self.sgs:
                i_sys = abc_to_vec(*sg.machine.i_abc) * sg.machine.scale
                sg.machine.swap_to_machine(abc_to_vec(*v[list(sg.nodes)]), i_sys, t)
                sg.machine.set_mode(SgMode.EXCITER_ON)
                for eid in sg.shunt_ids:
                    net.set_conductance(eid, sg.machine.conductance)
        elif a.action == "enable_governors":
            for sg in self.sgs:
                sg.machine.set_mode(SgMode.GOVERNOR_ON)
        elif a.action == "swap_zip_loads":
            for ld in self.loads:
                ld.zip_mode = True
        elif a.action == "ramp_ibr_refs":
            duration = (a.until - a.time) if a.until is not None else 0.0
            for g in self.gfls:
                g.inv.start_ramp(duration)
        elif a.action == "open_source_breakers":
            for g in self.gfls:
                net.apply_switch(SwitchEvent(g.switch_group, "open", t))
        else:
            w = self._owf(a.target)
            m = w.model
            if a.action == "connect_owf_poi":
                net.apply_switch(SwitchEvent(w.switch_group, "closed", t))
                m.connect_poi(abc_to_vec(*v[list(w.poi_nodes)]) * cmath.exp(-1j * self.wb * t), t)
            elif a.action == "close_owf_switch":
                m.close_converter(list(v[list(w.term_nodes)]))
                for eid in w.shunt_ids:
                    net.set_conductance(eid, m.conductance)
            elif a.action == "enable_gsc":
                m.enable_gsc()
            elif a.action == "start_turbine":
                m.start_turbine(w.wind(t))
            elif a.action == "enable_rsc":
                m.enable_rsc()

    def _owf(self, plant_id):
        for w in self.owfs:
            if w.model.plant.id == plant_id:
                return w
        raise SimulationError(f"schedule targets unknown wind plant {plant_id!r}")

    # ------------------------------------------------------------- stepping
    def _load_admittance(self, ld):
        """Equivalent admittance of a load at its filtered voltage magnitude.

        Loads are variable admittances rather than current sources: a
        constant-power current computed from the last solved voltage is a
        lagged negative conductance and destabilizes the solution.
        """
        r = max(ld.v_meas, 1e-6) / ld.v0
        if ld.zip_mode:
            z, i, p = ld.rec.z_frac, ld.rec.i_frac, ld.rec.p_frac
        else:
            z, i, p = 0.0, 0.0, 1.0
        if r < LOAD_LOW_V:
            return ld.y0
        return ld.y0 * (z + i / r + p / (r * r))

    def step(self):
        """Advance one step; returns the solved node voltages."""
        n = self._n
        dt, wb = self.dt, self.wb
        t1 = (n + 1) * dt
        self._apply_due(n)
        net = self.net
        vl = net.v.tolist()
        inj = [0.0] * net.n
        rot = self._rot

        def add(nodes, vals):
            for k, x in zip(nodes, vals):
                inj[k] += x

        def pick(nodes):
            return [vl[k] for k in nodes]

        for ld in self.loads:
            vp = abc_to_vec(*pick(ld.nodes)) * rot
            add(ld.nodes, vec_to_abc((ld.y0 - self._load_admittance(ld)) * vp))
        for sg in self.sgs:
            add(sg.nodes, sg.machine.norton(t1))
        if self.gfls:
            src = cmath.exp(1j * wb * t1)
            for g in self.gfls:
                add(g.nodes, g.inv.injection())
                for eid, val in zip(g.source_ids, vec_to_abc(g.phasor * src)):
                    net.set_source(eid, val)
        for w in self.owfs:
            add(w.term_nodes, w.model.injection(pick(w.term_nodes)))
        v = net.solve_step(np.array(inj))
        vl = v.tolist()
        a_load = self._a_load
        for ld in self.loads:
            ld.v_meas += a_load * (abs(abc_to_vec(*pick(ld.nodes))) - ld.v_meas)
        for sg in self.sgs:
            sg.machine.update(pick(sg.nodes))
        for g in self.gfls:
            g.inv.update(pick(g.nodes))
        for w in self.owfs:
            w.model.update(pick(w.term_nodes), pick(w.poi_nodes), w.wind(t1))
        self._n = n + 1
        return v

    @property
    def time(self):
        return self._n * self.dt

    # --------------------------------------------------------------- channels
    def available_channels(self):
        out = [f"{w.model.plant.id}.{c}" for w in self.owfs for c in OWF_CHANNELS]
        out += [f"bus{b.id}.V" for b in self.case.buses]
        out += [f"{sg.machine.plant.id}.{c}" for sg in self.sgs for c in SG_CHANNELS]
        out += [f"{g.inv.plant.id}.{c}" for g in self.gfls for c in GFL_CHANNELS]
        return out

    def default_channels(self):
        if self.owfs:
            return [f"{w.model.plant.id}.{c}" for w in self.owfs for c in ("P_MW", "V_poi", "wind")]
        return [f"bus{b.id}.V" for b in self.case.buses] + [f"{sg.machine.plant.id}.speed" for sg in self.sgs]

    def probe(self, channels):
        """Build a sampler for ``channels``; returns (meter_update, sample) callables."""
        unknown = [c for c in channels if c not in set(self.available_channels())]
        if unknown:
            raise ScenarioError(f"unknown channels {unknown}; available: {', '.join(self.available_channels())}")
        window = round(1.0 / (self.case.nominal_hz * self.dt))
        meters = {}
        for ch in channels:
            dev, name = ch.split(".", 1)
            if name in ("V", "V_poi"):
                bus = int(dev[3:]) if name == "V" else self._owf(dev).model.plant.poi_bus
                if bus not in meters:
                    meters[bus] = RmsMeter(window)
                    meters[bus].prime(self.snapshot.buses[bus].magnitude)
        values = {bus: self.snapshot.buses[bus].magnitude for bus in meters}
        idx = {bus: tuple(int(k) for k in self.bus_index[bus]) for bus in meters}
        # plant P and Q are reported as one-cycle means of the instantaneous power
        powers, flows = {}, []
        for dev in dict.fromkeys(ch.split(".", 1)[0] for ch in channels
                                 if ch.split(".", 1)[1] in ("P_MW", "Q_Mvar")):
            powers[dev] = [0.0, 0.0]
            flows.append((self._power_flow(self._owf(dev)), MeanMeter(window), MeanMeter(window), powers[dev]))

        def update(v):
            vl = v.tolist()
            for bus, m in meters.items():
                a, b, c = idx[bus]
                values[bus] = m.update(vl[a], vl[b], vl[c])
            for s_out, mp, mq, out in flows:
                s = s_out()
                out[0] = mp.update(s.real)
                out[1] = mq.update(s.imag)

        getters = [self._getter(ch, values, powers) for ch in channels]

        def sample():
            return [g() for g in getters]

        return update, sample

    def _power_flow(self, w):
        """Callable giving the instantaneous complex power out of a plant at its POI, in MVA."""
        net, s_base = self.net, self._s_base
        sw_ids = net.groups[w.switch_group]
        poi = list(w.poi_nodes)

        def s_out():
            i = abc_to_vec(*(net.element_current(e) for e in sw_ids))
            return -abc_to_vec(*net.v[poi]) * i.conjugate() * s_base

        return s_out

    def _getter(self, ch, rms, powers):
        dev, name = ch.split(".", 1)
        net = self.net
        if dev.startswith("bus") and name == "V":
            bus = int(dev[3:])
            return lambda: rms[bus]
        for sg in self.sgs:
            if sg.machine.plant.id == dev:
                st = sg.machine.state
                return {"speed": lambda: st.speed, "Pe": lambda: st.pe,
                        "efd": lambda: st.efd, "pm": lambda: st.pm}[name]
        for g in self.gfls:
            if g.inv.plant.id == dev:
                inv = g.inv
                nodes = list(g.nodes)

                def pq(kind, inv=inv, nodes=nodes):
                    s = abc_to_vec(*net.v[nodes]) * (abc_to_vec(*inv.injection()) / inv.scale).conjugate()
                    return s.real if kind == "P" else s.imag

                return {"P": lambda: pq("P"), "Q": lambda: pq("Q"),
                        "freq": lambda: inv.state.freq, "dp": lambda: inv.state.dp}[name]
        w = self._owf(dev)
        m = w.model
        s_out = self._power_flow(w)
        bus = m.plant.poi_bus
        return {
            "P_MW": lambda: powers[dev][0],
            "Q_Mvar": lambda: powers[dev][1],
            "P_inst": lambda: s_out().real,
            "Q_inst": lambda: s_out().imag,
            "V_poi": lambda: rms[bus],
            "wind": lambda: m.out.wind if m.status.poi_connected else w.wind(self.time),
            "Vdc": lambda: m.dc.v_dc,
            "omega": lambda: m.mech.omega,
            "beta": lambda: m.mech.beta,
            "P_chopper": lambda: m.dc.p_chopper,
            "dc_residual": lambda: m.dc.residual,
            "P_gsc": lambda: m.out.p_gsc,
        }[name]

    def run(self, t_end, channels=None, record_every=1):
        """Step to ``t_end`` and return the :class:`Recording`."""
        channels = list(channels) if channels else self.default_channels()
        rec = Recording(channels, self.dt * record_every)
        n_steps = step_index(t_end, self.dt)
        if n_steps <= 0:
            return rec
        update, sample = self.probe(channels)
        update(self.net.v)
        rec.append(0.0, sample())
        try:
            for n in range(n_steps):
                v = self.step()
                update(v)
                if (n + 1) % record_every == 0:
                    vals = sample()
                    if not all(math.isfinite(x) for x in vals):
                        raise SimulationError("non-finite value in recorded channels", self.time)
                    rec.append(round((n + 1) * self.dt, 12), vals)
        except (NetworkError, OwfError, MachineError, FloatingPointError, ValueError) as exc:
            raise SimulationError(str(exc), self.time) from exc
        return rec


def _order(ev):
    """Tie-break for events on the same step: schedule order, then by name."""
    from .init_sequencer import ACTIONS

    if isinstance(ev, ScheduleAction):
        return (ACTIONS.index(ev.action), ev.target)
    return (0, str(getattr(ev, "element", getattr(ev, "branch", ""))))


def case_hash(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def build_simulation(scenario):
    """Load, validate and prepare the simulation described by ``scenario``."""
    case = load_case(scenario.case_path)
    if scenario.overrides:
        case = with_overrides(case, scenario.overrides)
    report = validate_case(case)
    if not report.ok:
        raise SimulationError("case failed validation: " + "; ".join(report.violations))
    sim = Simulation(case, scenario.dt, wind=scenario.wind)
    bulk = default_bulk_schedule(case, **scenario.schedule)
    bulk_end = max((a.time for a in bulk), default=0.0)
    owf = default_owf_schedule(case.owf_plants, scenario.owf_t0, scenario.owf_spacing,
                               scenario.owf_stage_step, bulk_end=bulk_end)
    execute_schedule(bulk + owf, sim)
    for f in scenario.faults:
        sim.add_fault(f)
    for b in scenario.breakers:
        sim.queue_breaker(b)
    return sim


def run_simulation(scenario):
    """Power flow, snapshot, schedule and events, then the fixed-step loop.

    Returns a :class:`~owf_emt.recording.Recording`; ``t_end = 0`` gives an
    empty recording that carries only metadata.
    """
    scenario.validate()
    sim = build_simulation(scenario)
    rec = sim.run(scenario.t_end, scenario.channels, scenario.record_every)
    rec.metadata.update({
        "scenario": scenario.name,
        "case": Path(scenario.case_path).name,
        "case_sha256": case_hash(scenario.case_path),
        "dt": repr(scenario.dt),
        "t_end": repr(scenario.t_end),
        "record_every": scenario.record_every,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "applied_events": len(sim.log.applied),
    })
    rec.log = sim.snapshot.to_text().splitlines() + [
        f"{t:.6f} {target} {action}" for t, target, action in sim.log.applied
    ]
    return rec
