"""Instantaneous-value nodal solver with trapezoidal companion models.

The solver is unit-agnostic: tests drive it in ohms/henries/farads, the
simulation engine drives it in per unit with time in seconds.  Node index
``-1`` denotes ground.

Every step solves ``G v = i_ext + i_hist`` with a prefactorized ``G``.
Topology changes (switch operations, element enable/disable, conductance
updates) mark the matrix dirty and it is refactorized before the next solve.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

GROUND = -1
G_SWITCH_CLOSED = 1e4
G_SWITCH_OPEN = 1e-9
G_IDEAL_SOURCE = 1e6
KINDS = ("R", "L", "C", "RL", "ideal-source", "switch", "shunt")


class NetworkError(Exception):
    """Raised for invalid element definitions or unsolvable networks."""


@dataclass(frozen=True)
class SwitchEvent:
    element: int | str
    state: str
    time: float = 0.0

    def __post_init__(self):
        if self.state not in ("open", "closed"):
            raise ValueError(f"switch state must be 'open' or 'closed', got {self.state!r}")


@dataclass(frozen=True)
class FaultSpec:
    bus: int
    t_on: float
    duration: float
    fault_r: float = 1e-3
    type: str = "three-phase-to-ground"

    def __post_init__(self):
        if not self.fault_r > 0:
            raise ValueError("fault_r must be positive")
        if not self.duration > 0:
            raise ValueError("fault duration must be positive")
        if self.type != "three-phase-to-ground":
            raise ValueError(f"unsupported fault type {self.type!r}")


@dataclass
class _Element:
    kind: str
    a: int
    b: int
    g: float = 0.0
    r: float = 0.0
    l: float = 0.0
    c: float = 0.0
    state: str = "closed"
    g_closed: float = G_SWITCH_CLOSED
    g_open: float = G_SWITCH_OPEN
    enabled: bool = True
    slot: int = -1  # index into the kind's state arrays


def snap_time(t, dt):
    """Snap an event time to the nearest step boundary."""
    return round(t / dt) * dt


def step_index(t, dt):
    return int(round(t / dt))


class NodalSystem:
    """Fixed-step nodal network.

    Parameters
    ----------
    dt : float
        Time step in seconds.
    n_nodes : int
        Initial number of nodes; more can be added with :meth:`add_node`.
    """

    def __init__(self, dt, n_nodes=0):
        if not dt > 0:
            raise NetworkError("dt must be positive")
        self.dt = float(dt)
        self.n = int(n_nodes)
        self.elements: list[_Element] = []
        self.groups: dict[str, list[int]] = {}
        self.bus_nodes: dict[int, tuple[int, int, int]] = {}
        self.bus_zbase: dict[int, float] = {}
        self._faults: list[FaultSpec] = []
        self.v = np.zeros(self.n)
        self.factorizations = 0
        self.damp_on_switching = True
        self._damp_next = False
        self._stepped = False
        self._structure_dirty = True
        self._g_dirty = True
        self._lu = None

    # ------------------------------------------------------------------ build
    def add_node(self, count=1):
        first = self.n
        self.n += count
        self.v = np.concatenate([self.v, np.zeros(count)])
        self._structure_dirty = True
        self._g_dirty = True
        return first if count == 1 else tuple(range(first, first + count))

    def add_bus(self, bus_id, z_base=1.0):
        """Allocate three phase nodes for a bus and remember its impedance base."""
        nodes = self.add_node(3)
        self.bus_nodes[bus_id] = nodes
        self.bus_zbase[bus_id] = float(z_base)
        return nodes

    def _check_nodes(self, nodes):
        for node in nodes:
            if node != GROUND and not 0 <= node < self.n:
                raise NetworkError(f"node {node} does not exist")

    def stamp_element(self, kind, params, nodes):
        """Register an element and return its id.

        ``params`` is a float for R, L, C, shunt (conductance) and ideal
        source (source value); a dict for RL (``r``, ``l``) and switch
        (``state``, optional ``g_closed``/``g_open``).
        """
        if kind not in KINDS:
            raise NetworkError(f"unknown element kind {kind!r}")
        nodes = tuple(nodes) if len(nodes) == 2 else (nodes[0], GROUND)
        self._check_nodes(nodes)
        a, b = nodes
        el = _Element(kind, a, b)
        if kind == "R":
            if not params > 0:
                raise NetworkError("resistance must be positive")
            el.r = float(params)
            el.g = 1.0 / el.r
        elif kind == "L":
            if not params > 0:
                raise NetworkError("inductance must be positive")
            el.l = float(params)
        elif kind == "RL":
            el.r = float(params.get("r", 0.0))
            el.l = float(params["l"])
            if el.l < 0 or el.r < 0 or (el.l == 0 and el.r == 0):
                raise NetworkError("RL element needs r >= 0, l >= 0, not both zero")
            if el.l == 0:
                el.kind = "R"
                el.g = 1.0 / el.r
        elif kind == "C":
            if not params > 0:
                raise NetworkError("capacitance must be positive")
            el.c = float(params)
        elif kind == "shunt":
            if params < 0:
                raise NetworkError("shunt conductance must be non-negative")
            el.g = float(params)
        elif kind == "ideal-source":
            el.g = G_IDEAL_SOURCE
            el.c = float(params)  # source value lives in `c` for this kind
        elif kind == "switch":
            params = params or {}
            el.state = params.get("state", "closed")
            el.g_closed = float(params.get("g_closed", G_SWITCH_CLOSED))
            el.g_open = float(params.get("g_open", G_SWITCH_OPEN))
            if el.state not in ("open", "closed"):
                raise NetworkError(f"bad switch state {el.state!r}")
            if not (el.g_closed > 0 and el.g_open > 0):
                raise NetworkError("switch conductances must be positive")
        self.elements.append(el)
        self._sync_state()
        self._structure_dirty = True
        self._g_dirty = True
        return len(self.elements) - 1

    def companion_conductance(self, element_id):
        el = self.elements[element_id]
        if el.kind in ("L", "RL"):
            return 1.0 / (2.0 * el.l / self.dt + el.r)
        if el.kind == "C":
            return 2.0 * el.c / self.dt
        if el.kind == "switch":
            return el.g_closed if el.state == "closed" else el.g_open
        return el.g

    def register_group(self, name, element_ids):
        self.groups[name] = list(element_ids)

    # ------------------------------------------------------------- topology
    def _resolve(self, element):
        if isinstance(element, str):
            if element not in self.groups:
                raise NetworkError(f"unknown element {element!r}")
            return self.groups[element]
        if not 0 <= element < len(self.elements):
            raise NetworkError(f"unknown element {element!r}")
        return [element]

    def apply_switch(self, event):
        """Set switch state; returns True when the matrix changed."""
        changed = False
        for eid in self._resolve(event.element):
            el = self.elements[eid]
            if el.kind != "switch":
                raise NetworkError(f"element {eid} is not a switch")
            if el.state != event.state:
                el.state = event.state
                changed = True
        if changed:
            self._topology_changed()
        return changed

    def set_enabled(self, element_id, enabled):
        """Insert or remove an element without renumbering nodes.

        A re-enabled inductor starts with zero current; a re-enabled
        capacitor starts charged to the present node voltage difference.
        """
        el = self.elements[element_id]
        if el.enabled == enabled:
            return False
        self._sync_state()
        el.enabled = enabled
        self._structure_dirty = True
        self._topology_changed()
        if enabled:
            u = self._node_v(el.a) - self._node_v(el.b)
            self._pending_init = getattr(self, "_pending_init", {})
            self._pending_init[element_id] = (0.0, u)
        return True

    def set_conductance(self, element_id, g):
        el = self.elements[element_id]
        if el.kind != "shunt":
            raise NetworkError("only shunt conductances can be changed")
        if g != el.g:
            # no inductor current is interrupted, so no damping step is needed
            el.g = float(g)
            self._g_dirty = True

    def set_source(self, element_id, value):
        self.elements[element_id].c = value

    def apply_fault(self, spec):
        """Insert a three-phase-to-ground fault; returns (on, off) events.

        The fault resistance is given in ohms and converted with the bus
        impedance base registered via :meth:`add_bus`.
        """
        if spec.bus not in self.bus_nodes:
            raise NetworkError(f"fault bus {spec.bus} does not exist")
        for other in self._faults:
            if other.bus == spec.bus and (
                spec.t_on < other.t_on + other.duration and other.t_on < spec.t_on + spec.duration
            ):
                raise NetworkError(f"overlapping fault on bus {spec.bus}")
        r_pu = spec.fault_r / self.bus_zbase[spec.bus]
        ids = [
            self.stamp_element("switch", {"state": "open", "g_closed": 1.0 / r_pu}, (node, GROUND))
            for node in self.bus_nodes[spec.bus]
        ]
        name = f"fault{len(self._faults)}@bus{spec.bus}"
        self.register_group(name, ids)
        self._faults.append(spec)
        return (
            SwitchEvent(name, "closed", spec.t_on),
            SwitchEvent(name, "open", spec.t_on + spec.duration),
        )

    def _topology_changed(self):
        self._g_dirty = True
        if self._stepped and self.damp_on_switching:
            self._damp_next = True

    # ------------------------------------------------------------- assembly
    def _node_v(self, node):
        return 0.0 if node == GROUND else float(self.v[node])

    def _sync_state(self):
        """Copy live companion state back into element records."""
        if getattr(self, "_rl_ids", None) is None:
            return
        for k, eid in enumerate(self._rl_ids):
            self.elements[eid]._i = float(self._rl_i[k])
            self.elements[eid]._u = float(self._rl_u[k])
        for k, eid in enumerate(self._c_ids):
            self.elements[eid]._i = float(self._c_i[k])
            self.elements[eid]._u = float(self._c_u[k])

    def _rebuild(self):
        self._sync_state()
        pending = getattr(self, "_pending_init", {})
        rl, cap, src = [], [], []
        for eid, el in enumerate(self.elements):
            if not el.enabled:
                continue
            if el.kind in ("L", "RL"):
                rl.append(eid)
            elif el.kind == "C":
                cap.append(eid)
            elif el.kind == "ideal-source":
                src.append(eid)
        ground = self.n  # extra slot that is dropped after accumulation

        def idx(ids, attr):
            return np.array(
                [ground if getattr(self.elements[e], attr) == GROUND else getattr(self.elements[e], attr) for e in ids],
                dtype=np.intp,
            )

        def state(ids, name):
            out = np.zeros(len(ids))
            for k, e in enumerate(ids):
                if e in pending:
                    out[k] = pending[e][0 if name == "_i" else 1]
                else:
                    out[k] = getattr(self.elements[e], name, 0.0)
            return out

        self._rl_ids, self._c_ids, self._src_ids = rl, cap, src
        self._rl_a, self._rl_b = idx(rl, "a"), idx(rl, "b")
        self._rl_g = np.array([self.companion_conductance(e) for e in rl])
        self._rl_k = np.array([2.0 * self.elements[e].l / self.dt - self.elements[e].r for e in rl])
        self._rl_kbe = np.array([2.0 * self.elements[e].l / self.dt for e in rl])
        self._rl_i, self._rl_u = state(rl, "_i"), state(rl, "_u")
        self._c_a, self._c_b = idx(cap, "a"), idx(cap, "b")
        self._c_g = np.array([self.companion_conductance(e) for e in cap])
        self._c_i, self._c_u = state(cap, "_i"), state(cap, "_u")
        self._src_node = idx(src, "a")
        self._hist_idx = np.concatenate([self._rl_a, self._rl_b, self._c_a, self._c_b])
        self._pending_init = {}
        for k, eid in enumerate(rl):
            self.elements[eid].slot = k
        for k, eid in enumerate(cap):
            self.elements[eid].slot = k
        self._structure_dirty = False

    def conductance_matrix(self):
        """Assemble the dense nodal conductance matrix for the present topology."""
        if self._structure_dirty:
            self._rebuild()
        n = self.n
        g = np.zeros((n + 1, n + 1))
        for el in self.elements:
            if not el.enabled:
                continue
            if el.kind in ("L", "RL", "C", "switch"):
                val = (
                    (el.g_closed if el.state == "closed" else el.g_open)
                    if el.kind == "switch"
                    else (
                        2.0 * el.c / self.dt if el.kind == "C" else 1.0 / (2.0 * el.l / self.dt + el.r)
                    )
                )
            else:
                val = el.g
            a = n if el.a == GROUND else el.a
            b = n if el.b == GROUND else el.b
            g[a, a] += val
            g[b, b] += val
            g[a, b] -= val
            g[b, a] -= val
        return g[:n, :n]

    def factorize(self):
        g = self.conductance_matrix()
        if self.n == 0:
            raise NetworkError("empty network")
        lu, piv = lu_factor(g, check_finite=False)
        diag = np.abs(np.diag(lu))
        if not np.all(np.isfinite(diag)) or diag.min() <= 1e-14 * max(diag.max(), 1.0):
            raise NetworkError("singular conductance matrix (floating subnetwork)")
        self._lu = (lu, piv)
        self._g_dirty = False
        self.factorizations += 1

    # ------------------------------------------------------------- stepping
    def initialize_state(self, element_id, current, voltage):
        """Seed companion history: branch current and voltage (a minus b)."""
        if self._structure_dirty:
            self._rebuild()
        el = self.elements[element_id]
        if el.kind in ("L", "RL"):
            self._rl_i[el.slot] = current
            self._rl_u[el.slot] = voltage
        elif el.kind == "C":
            self._c_i[el.slot] = current
            self._c_u[el.slot] = voltage
        else:
            raise NetworkError(f"element {element_id} has no history")

    def set_voltages(self, v):
        self.v = np.array(v, dtype=float)

    def solve_step(self, injections=None):
        """Advance one step; ``injections`` are external currents into nodes.

        The first step after a topology change is taken as two backward-Euler
        half steps (critical damping adjustment), which suppresses the
        trapezoidal rule's undamped oscillation when an inductor current is
        interrupted.  Both rules share the same companion conductances, so no
        extra factorization is needed.
        """
        if self._structure_dirty:
            self._rebuild()
        if self._g_dirty or self._lu is None:
            self.factorize()
        rhs_ext = np.zeros(self.n)
        if self._src_ids:
            vals = np.array([self.elements[e].c for e in self._src_ids]) * G_IDEAL_SOURCE
            rhs_ext += np.bincount(self._src_node, weights=vals, minlength=self.n + 1)[: self.n]
        if injections is not None:
            rhs_ext += injections
        if self._damp_next:
            self._damp_next = False
            self._substep(rhs_ext, backward_euler=True)
            v = self._substep(rhs_ext, backward_euler=True)
        else:
            v = self._substep(rhs_ext, backward_euler=False)
        self._stepped = True
        return v

    def _substep(self, rhs_ext, backward_euler):
        n = self.n
        if backward_euler:
            hrl = self._rl_g * self._rl_kbe * self._rl_i
            hc = self._c_g * self._c_u
        else:
            hrl = self._rl_g * (self._rl_u + self._rl_k * self._rl_i)
            hc = self._c_g * self._c_u + self._c_i
        weights = np.concatenate([-hrl, hrl, hc, -hc])
        rhs = np.bincount(self._hist_idx, weights=weights, minlength=n + 1)[:n] + rhs_ext
        v = lu_solve(self._lu, rhs, check_finite=False)
        if not np.all(np.isfinite(v)):
            raise NetworkError("non-finite node voltages")
        vx = np.append(v, 0.0)
        u = vx[self._rl_a] - vx[self._rl_b]
        self._rl_i = self._rl_g * u + hrl
        self._rl_u = u
        uc = vx[self._c_a] - vx[self._c_b]
        self._c_i = self._c_g * uc - hc
        self._c_u = uc
        self.v = v
        return v

    # ------------------------------------------------------------ readback
    def element_current(self, element_id):
        """Current from node a to node b through the element."""
        el = self.elements[element_id]
        if not el.enabled:
            return 0.0
        if self._structure_dirty:
            self._rebuild()
        if el.kind in ("L", "RL"):
            return float(self._rl_i[el.slot])
        if el.kind == "C":
            return float(self._c_i[el.slot])
        u = self._node_v(el.a) - self._node_v(el.b)
        if el.kind == "ideal-source":
            return el.g * (el.c - u)
        if el.kind == "switch":
            return (el.g_closed if el.state == "closed" else el.g_open) * u
        return el.g * u

    def element_voltage(self, element_id):
        el = self.elements[element_id]
        return self._node_v(el.a) - self._node_v(el.b)

    def stored_energy(self):
        """Sum of 0.5*L*i^2 + 0.5*C*v^2 over enabled reactive elements."""
        if self._structure_dirty:
            self._rebuild()
        e = 0.0
        for k, eid in enumerate(self._rl_ids):
            e += 0.5 * self.elements[eid].l * self._rl_i[k] ** 2
        for k, eid in enumerate(self._c_ids):
            e += 0.5 * self.elements[eid].c * self._c_u[k] ** 2
        return e


def three_phase(net, kind, params, nodes_a, nodes_b=None):
    """Stamp one element per phase; returns the three element ids."""
    ids = []
    for p in range(3):
        b = GROUND if nodes_b is None else nodes_b[p]
        ids.append(net.stamp_element(kind, params, (nodes_a[p], b)))
    return ids
