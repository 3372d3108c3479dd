import cmath
import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from owf_emt.case_model import ExciterParams, GovernorParams, SgPlant
from owf_emt.machines import (
    MachineError,
    SgMode,
    SyncMachine,
    exciter_step,
    governor_step,
)
from owf_emt.transforms import vec_to_abc

DT = 50e-6
WB = 2 * math.pi * 60


def plant(**kw):
    base = dict(id="G", bus=1, mva_base=100.0, p=0.8, h=4.0, xd=1.8, xq=1.7, xd_p=0.3, xq_p=0.4, ra=0.003)
    base.update(kw)
    return SgPlant(**base)


def machine(v=1.0 + 0j, s=0.8 + 0.2j, mode=SgMode.CONSTANT_SPEED, **kw):
    m = SyncMachine(plant(**kw), 100.0, WB, DT)
    m.initialize(v, (s / v).conjugate(), 0.0)
    m.set_mode(SgMode.CONSTANT_SPEED)
    m.set_mode(mode)
    return m


def run_against(m, v, steps):
    for n in range(steps):
        t1 = (n + 1) * DT
        m.step(vec_to_abc(v * cmath.exp(1j * WB * t1)), t1)


def test_initialization_matches_load_flow():
    m = machine()
    s = m.state
    assert s.te == pytest.approx(0.8 + 0.003 * abs(0.8 - 0.2j) ** 2, rel=1e-9)
    assert s.pm == s.te
    assert s.vt == pytest.approx(1.0)


def test_steady_state_holds_against_stiff_bus():
    m = machine(mode=SgMode.GOVERNOR_ON)
    te0 = m.state.te
    run_against(m, 1.0 + 0j, 4000)
    assert m.state.te == pytest.approx(te0, abs=1e-4)
    assert m.state.speed == pytest.approx(1.0, abs=1e-6)


def test_swing_acceleration_slope():
    # governor frozen, so the rotor sees the full mechanical step
    m = machine(mode=SgMode.GOVERNOR_ON, governor=GovernorParams(enabled=False), d=0.0)
    m.state.pm += 0.1
    run_against(m, 1.0 + 0j, 400)  # 20 ms: the angle barely moves
    slope = (m.state.speed - 1.0) / (400 * DT)
    assert slope == pytest.approx(0.1 / (2 * 4.0), rel=0.02)


def test_constant_speed_mode_locks_rotor():
    m = machine(mode=SgMode.CONSTANT_SPEED)
    m.state.pm += 0.3
    run_against(m, 1.0 + 0j, 200)
    assert m.state.speed == 1.0


def test_modes_only_move_forward():
    m = machine(mode=SgMode.EXCITER_ON)
    with pytest.raises(MachineError):
        m.set_mode(SgMode.CONSTANT_SPEED)


def test_uninitialized_machine_refuses_to_step():
    m = SyncMachine(plant(), 100.0, WB, DT)
    with pytest.raises(MachineError):
        m.norton(DT)


def test_exciter_lag_matches_ode():
    p = ExciterParams(ka=50.0, ta=0.05)
    efd, dt = 2.0, 1e-4
    ts = np.arange(1, 2001) * dt
    out = []
    for _ in ts:
        efd = exciter_step(efd, 0.99, 1.0, 2.0, p, dt)
        out.append(efd)
    ref = solve_ivp(lambda t, y: (2.0 + 50.0 * 0.01 - y) / 0.05, (0, ts[-1]), [2.0],
                    t_eval=ts, rtol=1e-10, atol=1e-12).y[0]
    assert np.max(np.abs(np.array(out) - ref)) < 1e-5


def test_exciter_limits():
    p = ExciterParams(ka=50.0, ta=0.05, efd_max=3.0)
    efd = 2.0
    for _ in range(5000):
        efd = exciter_step(efd, 0.5, 1.0, 2.0, p, 1e-4)
    assert efd == 3.0


def test_governor_droop_steady_state():
    p = GovernorParams(r=0.05, tg=0.5)
    pm = 0.8
    for _ in range(20000):  # 40 time constants
        pm = governor_step(pm, 1.01, 0.8, p, 1e-3)
    assert pm == pytest.approx(0.8 - 0.01 / 0.05, abs=1e-9)


def test_governor_disabled_holds_output():
    p = GovernorParams(enabled=False)
    assert governor_step(0.7, 1.05, 0.8, p, 1e-3) == 0.7


def test_voltage_source_mode_conductance():
    m = machine(mode=SgMode.CONSTANT_SPEED)
    assert m.conductance == pytest.approx(1.0 / (2 * 0.3 / WB / DT + 0.003))
    fresh = SyncMachine(plant(), 100.0, WB, DT)
    assert fresh.conductance > 1e5
