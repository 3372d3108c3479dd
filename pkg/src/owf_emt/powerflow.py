"""Positive-sequence AC power flow and the snapshot that seeds an EMT run.

Newton-Raphson in polar coordinates with a dense analytic Jacobian and a
flat start.  Offshore wind plants are not part of the dispatch: they are
energized later by the initialization schedule.  Grid-following plants
are constant-PQ injections.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .case_model import SystemCase


class PowerFlowError(Exception):
    pass


def build_ybus(case: SystemCase):
    """Bus admittance matrix on the system base, ordered like ``case.buses``.

    Open branches are left out.  Each pi-section puts half its charging
    susceptance on either end.
    """
    index = {b.id: k for k, b in enumerate(case.buses)}
    n = len(case.buses)
    y = np.zeros((n, n), dtype=complex)
    for br in case.branches:
        if br.breaker_state != "closed":
            continue
        z = complex(br.r, br.x)
        if z == 0:
            raise PowerFlowError(f"branch {br.id} has zero impedance")
        ys = 1.0 / z
        i, j = index[br.from_bus], index[br.to_bus]
        half = 0.5j * br.b_shunt
        y[i, i] += ys + half
        y[j, j] += ys + half
        y[i, j] -= ys
        y[j, i] -= ys
    return y


@dataclass(frozen=True)
class PowerFlowSolution:
    bus_ids: tuple
    vm: np.ndarray
    va: np.ndarray
    p_inj: np.ndarray
    q_inj: np.ndarray
    device_pq: dict
    iterations: int
    max_residual: float

    def index(self, bus_id):
        return self.bus_ids.index(bus_id)

    def voltage(self, bus_id):
        k = self.index(bus_id)
        return cmath.rect(self.vm[k], self.va[k])

    def phasors(self):
        return self.vm * np.exp(1j * self.va)


def _specified_injections(case, index):
    s_base = case.system_mva_base
    n = len(index)
    p = np.zeros(n)
    q = np.zeros(n)
    for ld in case.loads:
        p[index[ld.bus]] -= ld.p0
        q[index[ld.bus]] -= ld.q0
    for g in case.gfl_plants:
        scale = g.mva_base / s_base
        p[index[g.bus]] += g.p_ref * scale
        q[index[g.bus]] += g.q_ref * scale
    for sg in case.sg_plants:
        p[index[sg.bus]] += sg.p * sg.mva_base / s_base
    return p, q


def _mismatch(y, v, p_spec, q_spec):
    s = v * np.conj(y @ v)
    return p_spec - s.real, q_spec - s.imag, s


def _jacobian(y, v, pv_pq, pq):
    """Polar Jacobian blocks [dP/dth dP/dV; dQ/dth dQ/dV]."""
    ibus = y @ v
    diag_v = np.diag(v)
    diag_i = np.diag(ibus)
    vnorm = np.diag(v / np.abs(v))
    ds_dth = 1j * diag_v @ np.conj(diag_i - y @ diag_v)
    ds_dvm = diag_v @ np.conj(y @ vnorm) + np.conj(diag_i) @ vnorm
    j11 = ds_dth[np.ix_(pv_pq, pv_pq)].real
    j12 = ds_dvm[np.ix_(pv_pq, pq)].real
    j21 = ds_dth[np.ix_(pq, pv_pq)].imag
    j22 = ds_dvm[np.ix_(pq, pq)].imag
    return np.block([[j11, j12], [j21, j22]])


def solve_powerflow(case: SystemCase, tol=1e-10, max_iter=20):
    """Newton-Raphson power flow from a flat start.

    Parameters
    ----------
    case : SystemCase
        A case that passes :func:`~owf_emt.case_model.validate_case`.
    tol : float
        Largest allowed P or Q mismatch in per unit.
    max_iter : int
        Newton iterations before giving up.

    Returns
    -------
    PowerFlowSolution
        Voltages, net bus injections, per-device P/Q (system base) and
        convergence data.

    Raises
    ------
    PowerFlowError
        On divergence or a singular Jacobian.
    """
    index = {b.id: k for k, b in enumerate(case.buses)}
    y = build_ybus(case)
    types = [b.type for b in case.buses]
    slack = [k for k, t in enumerate(types) if t == "slack"]
    pv = [k for k, t in enumerate(types) if t == "PV"]
    pq = [k for k, t in enumerate(types) if t == "PQ"]
    if not slack:
        raise PowerFlowError("no slack bus")
    pv_pq = sorted(pv + pq)
    p_spec, q_spec = _specified_injections(case, index)

    vm = np.ones(len(types))
    va = np.zeros(len(types))
    for k in slack + pv:
        vm[k] = case.buses[k].v_set
    for k in slack:
        va[k] = math.radians(case.buses[k].angle_deg)
    v = vm * np.exp(1j * va)

    it = 0
    while True:
        dp, dq, _ = _mismatch(y, v, p_spec, q_spec)
        f = np.concatenate([dp[pv_pq], dq[pq]])
        resid = float(np.max(np.abs(f))) if f.size else 0.0
        if resid <= tol:
            break
        if it >= max_iter:
            raise PowerFlowError(f"no convergence after {max_iter} iterations (mismatch {resid:.3e})")
        jac = _jacobian(y, v, pv_pq, pq)
        try:
            dx = np.linalg.solve(jac, f)
        except np.linalg.LinAlgError:
            raise PowerFlowError("singular Jacobian") from None
        if not np.all(np.isfinite(dx)):
            raise PowerFlowError("singular Jacobian")
        va[pv_pq] += dx[: len(pv_pq)]
        vm[pq] += dx[len(pv_pq):]
        v = vm * np.exp(1j * va)
        it += 1

    s = v * np.conj(y @ v)
    device_pq = _allocate(case, index, s)
    return PowerFlowSolution(
        bus_ids=tuple(b.id for b in case.buses),
        vm=np.abs(v),
        va=np.angle(v),
        p_inj=s.real.copy(),
        q_inj=s.imag.copy(),
        device_pq=device_pq,
        iterations=it,
        max_residual=resid,
    )


def _allocate(case, index, s):
    """Split each bus's net injection over its devices (system base).

    Loads and GFL plants take their scheduled values; synchronous machines
    share the remainder, P at the slack and Q everywhere, in proportion to
    their ratings.
    """
    s_base = case.system_mva_base
    out = {}
    remaining = s.copy()
    for ld in case.loads:
        out[ld.id] = (-ld.p0, -ld.q0)
        remaining[index[ld.bus]] += complex(ld.p0, ld.q0)
    for g in case.gfl_plants:
        scale = g.mva_base / s_base
        out[g.id] = (g.p_ref * scale, g.q_ref * scale)
        remaining[index[g.bus]] -= complex(g.p_ref, g.q_ref) * scale
    by_bus = {}
    for sg in case.sg_plants:
        by_bus.setdefault(sg.bus, []).append(sg)
    for bus, sgs in by_bus.items():
        k = index[bus]
        total_mva = sum(sg.mva_base for sg in sgs)
        slack = case.bus(bus).type == "slack"
        fixed_p = sum(sg.p * sg.mva_base / s_base for sg in sgs)
        extra_p = remaining[k].real - fixed_p if slack else 0.0
        for sg in sgs:
            share = sg.mva_base / total_mva
            out[sg.id] = (sg.p * sg.mva_base / s_base + extra_p * share, remaining[k].imag * share)
    return out


def power_balance(case, sol):
    """Return (generation - load - losses) as a complex number; ~0 at convergence."""
    v = sol.phasors()
    index = {b: k for k, b in enumerate(sol.bus_ids)}
    losses = 0j
    for br in case.branches:
        if br.breaker_state != "closed":
            continue
        vi, vj = v[index[br.from_bus]], v[index[br.to_bus]]
        i_series = (vi - vj) / complex(br.r, br.x)
        losses += abs(i_series) ** 2 * complex(br.r, br.x)
        losses -= 0.5j * br.b_shunt * (abs(vi) ** 2 + abs(vj) ** 2)
    gen = sum(complex(*sol.device_pq[d.id]) for d in (*case.sg_plants, *case.gfl_plants))
    load = sum(complex(ld.p0, ld.q0) for ld in case.loads)
    return gen - load - losses


# ------------------------------------------------------------------ snapshot
@dataclass(frozen=True)
class BusSnapshot:
    bus: int
    magnitude: float
    phase: float
    p_gen: float = 0.0
    q_gen: float = 0.0
    p_load: float = 0.0
    q_load: float = 0.0

    def phase_angles(self):
        """Phase angles of the a, b, c sinusoids in radians."""
        return (self.phase, self.phase - 2.0 * math.pi / 3.0, self.phase + 2.0 * math.pi / 3.0)


@dataclass(frozen=True)
class InitSnapshot:
    """Bus phasors and per-device P/Q targets that seed an EMT run.

    ``device_targets`` holds (p, q) on each device's own base; loads use
    the system base.
    """

    buses: dict
    device_targets: dict
    system_mva_base: float
    nominal_hz: float
    iterations: int = 0
    max_residual: float = 0.0
    extras: dict = field(default_factory=dict)

    def phasor(self, bus_id):
        b = self.buses[bus_id]
        return cmath.rect(b.magnitude, b.phase)

    def to_text(self):
        """Audit block for the run log.

        One ``bus`` line per bus (id, |V| pu, angle deg, Pg, Qg, Pl, Ql on the
        system base) followed by one ``device`` line per device (id, P, Q on
        the device base).
        """
        lines = [
            "BEGIN INIT SNAPSHOT",
            f"system_mva_base {self.system_mva_base:.6g} nominal_hz {self.nominal_hz:.6g}",
            f"powerflow iterations {self.iterations} max_residual {self.max_residual:.3e}",
        ]
        for bid in sorted(self.buses):
            b = self.buses[bid]
            lines.append(
                f"bus {bid} {b.magnitude:.8f} {math.degrees(b.phase):.6f} "
                f"{b.p_gen:.6f} {b.q_gen:.6f} {b.p_load:.6f} {b.q_load:.6f}"
            )
        for dev in sorted(self.device_targets):
            p, q = self.device_targets[dev]
            lines.append(f"device {dev} {p:.8f} {q:.8f}")
        lines.append("END INIT SNAPSHOT")
        return "\n".join(lines)


def snapshot_for_emt(sol: PowerFlowSolution, case: SystemCase) -> InitSnapshot:
    s_base = case.system_mva_base
    gen = {b: 0j for b in sol.bus_ids}
    load = {b: 0j for b in sol.bus_ids}
    targets = {}
    for ld in case.loads:
        load[ld.bus] += complex(ld.p0, ld.q0)
        targets[ld.id] = (ld.p0, ld.q0)
    for dev in (*case.sg_plants, *case.gfl_plants):
        p, q = sol.device_pq[dev.id]
        gen[dev.bus] += complex(p, q)
        if dev in case.gfl_plants:
            targets[dev.id] = (dev.p_ref, dev.q_ref)
        else:
            targets[dev.id] = (p * s_base / dev.mva_base, q * s_base / dev.mva_base)
    buses = {}
    for k, bid in enumerate(sol.bus_ids):
        buses[bid] = BusSnapshot(
            bid, float(sol.vm[k]), float(sol.va[k]),
            gen[bid].real, gen[bid].imag, load[bid].real, load[bid].imag,
        )
    return InitSnapshot(buses, targets, s_base, case.nominal_hz, sol.iterations, sol.max_residual)


def flat_snapshot(case: SystemCase) -> InitSnapshot:
    """Snapshot at 1.0 pu and zero angle everywhere, with no power targets."""
    buses = {b.id: BusSnapshot(b.id, 1.0, 0.0) for b in case.buses}
    return InitSnapshot(buses, {}, case.system_mva_base, case.nominal_hz)
