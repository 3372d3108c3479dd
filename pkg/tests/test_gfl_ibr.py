import cmath
import math

import pytest

from owf_emt.case_model import GflPlant
from owf_emt.gfl_ibr import (
    OMEGA_MAX,
    GflInverter,
    PllState,
    droop_response,
    limit_current,
    pll_gains,
    pll_step,
)
from owf_emt.transforms import abc_to_vec, vec_to_abc

DT = 50e-6
WB = 2 * math.pi * 60


def source(v, f_hz, phase=0.0):
    """Balanced source sampled at t: returns a callable t -> (a, b, c)."""
    return lambda t: vec_to_abc(cmath.rect(v, 2 * math.pi * f_hz * t + phase))


def run_pll(src, steps, state=None):
    kp, ki = pll_gains(20.0, 0.707, WB)
    st = state or PllState(0.0, 1.0, 0.0)
    for n in range(steps):
        st = pll_step(st, src((n + 1) * DT), DT, kp, ki, WB)
    return st


def phase_error(st, f_hz, t, phase=0.0):
    """Angle error after a step that sampled the source at ``t``.

    The updated angle is the one used over the next step, so it is
    compared with the source phase one step later.
    """
    return math.remainder(st.theta - (2 * math.pi * f_hz * (t + DT) + phase), 2 * math.pi)


def test_pll_locks_from_phase_offset():
    st = run_pll(source(1.0, 60.0, 0.3), 4000)
    assert abs(phase_error(st, 60.0, 4000 * DT, 0.3)) < 1e-4
    assert st.omega == pytest.approx(1.0, abs=1e-5)


def test_pll_follows_frequency_step():
    st = run_pll(source(1.0, 61.0), 10000)
    assert st.omega == pytest.approx(61.0 / 60.0, abs=1e-5)
    # type-2 loop: no steady phase error on a frequency ramp
    assert abs(phase_error(st, 61.0, 10000 * DT)) < 1e-4


def test_pll_speed_clamp():
    st = run_pll(source(1.0, 80.0), 4000)
    assert st.omega <= OMEGA_MAX


@pytest.mark.parametrize("df", [0.015, -0.015, 0.0169])
def test_frequency_inside_deadband_gives_exact_zero(df):
    dp, _ = droop_response(60.0 + df, 1.0, GflPlant("g", 1, 100, 0.5, 0.0))
    assert dp == 0.0


@pytest.mark.parametrize("df", [0.02, -0.02])
def test_frequency_outside_deadband_acts_on_excess(df):
    p = GflPlant("g", 1, 100, 0.5, 0.0)
    dp, _ = droop_response(60.0 + df, 1.0, p)
    excess = abs(df) - p.freq_deadband
    assert dp == pytest.approx(-math.copysign(p.kf * excess / 60.0, df), rel=1e-9)


def test_voltage_droop_and_deadband():
    p = GflPlant("g", 1, 100, 0.5, 0.0)
    assert droop_response(60.0, 1.005, p)[1] == 0.0
    assert droop_response(60.0, 0.95, p)[1] == pytest.approx(p.kv * 0.04)


def test_current_limit_is_p_priority():
    assert limit_current(1.2, 0.5, 1.1) == (1.1, 0.0)
    i_d, i_q = limit_current(0.8, -1.0, 1.1)
    assert i_d == 0.8
    assert i_q == pytest.approx(-math.sqrt(1.1 ** 2 - 0.8 ** 2))
    assert math.hypot(i_d, i_q) <= 1.1 + 1e-12


def make_inverter(p_ref=0.5, q_ref=0.0, **kw):
    plant = GflPlant("g", 1, 100.0, p_ref, q_ref, **kw)
    inv = GflInverter(plant, 100.0, WB, 60.0, DT)
    inv.initialize(1.0 + 0j, 0.0)
    return inv


def drive(inv, src, steps, start=0):
    out = []
    for n in range(start, start + steps):
        i = inv.step(src((n + 1) * DT))
        out.append(i)
    return out


def test_injects_commanded_power_on_stiff_bus():
    inv = make_inverter(0.5, 0.1)
    inv.start_ramp(0.0)
    src = source(1.0, 60.0)
    drive(inv, src, 4000)
    v = cmath.rect(1.0, WB * 4001 * DT)  # the injection is for the next step
    i = abc_to_vec(*inv.injection())
    s = v * i.conjugate()
    assert s.real == pytest.approx(0.5, abs=2e-3)
    assert s.imag == pytest.approx(0.1, abs=2e-3)


def test_reference_ramp_is_linear():
    inv = make_inverter(0.8, 0.0)
    inv.start_ramp(0.9)
    src = source(1.0, 60.0)
    steps = int(round(0.45 / DT))
    drive(inv, src, steps)
    assert inv.state.p_ref == pytest.approx(0.4, abs=1e-9)
    drive(inv, src, steps + 10, start=steps)
    assert inv.state.p_ref == 0.8
    assert not inv.ramping


def test_settled_inverter_ignores_small_frequency_offsets():
    for f in (60.015, 59.985):
        inv = make_inverter(0.5)
        inv.start_ramp(0.0)
        src = source(1.0, f)
        drive(inv, src, 10000)
        assert inv.state.dp == 0.0
    inv = make_inverter(0.5)
    inv.start_ramp(0.0)
    drive(inv, source(1.0, 60.02), 10000)
    assert inv.state.dp != 0.0


def test_current_limit_under_deep_sag():
    inv = make_inverter(1.0, 0.3)
    inv.start_ramp(0.0)
    drive(inv, source(0.5, 60.0), 4000)
    s = inv.state
    assert math.hypot(s.i_d, s.i_q) <= 1.1 + 1e-9
    assert s.limited
