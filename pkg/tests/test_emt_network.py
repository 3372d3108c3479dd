import math

import numpy as np
import pytest

from owf_emt.emt_network import (
    GROUND,
    FaultSpec,
    NetworkError,
    NodalSystem,
    SwitchEvent,
)

DT = 50e-6


def rl_circuit(dt, r=1.0, l=0.1, source=1.0, with_switch=False):
    net = NodalSystem(dt)
    s, k = net.add_node(2)
    src = net.stamp_element("ideal-source", source, (s, GROUND))
    sw = None
    m = s
    if with_switch:
        m = net.add_node()
        sw = net.stamp_element("switch", {"state": "closed"}, (s, m))
    net.stamp_element("R", r, (m, k))
    ind = net.stamp_element("L", l, (k, GROUND))
    return net, src, sw, ind


def test_companion_conductances():
    net = NodalSystem(DT, 2)
    l_id = net.stamp_element("L", 0.1, (0, GROUND))
    c_id = net.stamp_element("C", 100e-6, (1, GROUND))
    r_id = net.stamp_element("R", 1.0, (0, 1))
    assert net.companion_conductance(l_id) == pytest.approx(2.5e-4, rel=1e-12)
    assert net.companion_conductance(c_id) == pytest.approx(4.0, rel=1e-12)
    assert net.companion_conductance(r_id) == 1.0


@pytest.mark.parametrize("kind,value", [("R", 0.0), ("L", -1.0), ("C", 0.0)])
def test_nonpositive_elements_rejected(kind, value):
    net = NodalSystem(DT, 1)
    with pytest.raises(NetworkError):
        net.stamp_element(kind, value, (0, GROUND))


def test_ideal_source_across_resistor():
    net = NodalSystem(DT, 1)
    net.stamp_element("ideal-source", 1.0, (0, GROUND))
    r = net.stamp_element("R", 1.0, (0, GROUND))
    v = net.solve_step()
    assert v[0] == pytest.approx(1.0, abs=1e-5)
    assert net.element_current(r) == pytest.approx(1.0, abs=1e-5)


def test_rl_step_response_matches_analytic():
    net, _, _, ind = rl_circuit(DT)
    tau = 0.1
    worst = 0.0
    for k in range(1, int(round(5 * tau / DT)) + 1):
        net.solve_step()
        t = k * DT
        worst = max(worst, abs(net.element_current(ind) - (1.0 - math.exp(-t / tau))))
        if k == int(round(0.1 / DT)):
            assert net.element_current(ind) == pytest.approx(0.6321, abs=1e-3)
    assert worst < 1e-3


def lc_ring_frequency(dt, l=1e-3, c=100e-6, t_end=0.02):
    net = NodalSystem(dt, 1)
    ind = net.stamp_element("L", l, (0, GROUND))
    cap = net.stamp_element("C", c, (0, GROUND))
    net.initialize_state(cap, 0.0, 1.0)
    net.initialize_state(ind, 0.0, 1.0)
    net.set_voltages([1.0])
    v = [1.0]
    for _ in range(int(round(t_end / dt))):
        v.append(net.solve_step()[0])
    v = np.array(v)
    crossings = np.nonzero(np.diff(np.signbit(v)))[0]
    # linear interpolation of each sign change
    times = [(k + v[k] / (v[k] - v[k + 1])) * dt for k in crossings]
    half_periods = np.diff(times)
    return 1.0 / (2.0 * np.mean(half_periods))


def test_lc_ringing_frequency():
    expected = 1.0 / (2.0 * math.pi * math.sqrt(1e-3 * 100e-6))
    assert expected == pytest.approx(503.3, abs=0.05)
    assert lc_ring_frequency(DT) == pytest.approx(expected, rel=0.01)


def rl_sine_error(dt, r=1.0, l=0.01, f=60.0, t_end=0.05):
    """Max current error of a series RL energized by sin(wt) at t=0."""
    w = 2 * math.pi * f
    z = math.hypot(r, w * l)
    phi = math.atan2(w * l, r)
    tau = l / r
    net = NodalSystem(dt, 2)
    src = net.stamp_element("ideal-source", 0.0, (0, GROUND))
    net.stamp_element("R", r, (0, 1))
    ind = net.stamp_element("L", l, (1, GROUND))
    err = 0.0
    for k in range(1, int(round(t_end / dt)) + 1):
        t = k * dt
        net.set_source(src, math.sin(w * t))
        net.solve_step()
        exact = (math.sin(w * t - phi) + math.sin(phi) * math.exp(-t / tau)) / z
        err = max(err, abs(net.element_current(ind) - exact))
    return err


def test_convergence_order_is_two():
    dts = [200e-6, 100e-6, 50e-6, 25e-6]
    errs = [rl_sine_error(dt) for dt in dts]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.2)


def test_energy_non_increasing_source_free_rlc():
    net = NodalSystem(DT, 2)
    net.stamp_element("L", 1e-3, (0, 1))
    net.stamp_element("R", 0.5, (1, GROUND))
    cap = net.stamp_element("C", 100e-6, (0, GROUND))
    net.initialize_state(cap, 0.0, 1.0)
    net.set_voltages([1.0, 0.0])
    e_prev = net.stored_energy()
    for _ in range(2000):
        net.solve_step()
        e = net.stored_energy()
        assert e <= e_prev * (1 + 1e-3)
        e_prev = e
    assert e_prev < 0.5 * 100e-6 * 1.0


def test_lossless_lc_conserves_energy():
    net = NodalSystem(DT, 1)
    ind = net.stamp_element("L", 1e-3, (0, GROUND))
    cap = net.stamp_element("C", 100e-6, (0, GROUND))
    net.initialize_state(cap, 0.0, 1.0)
    net.initialize_state(ind, 0.0, 1.0)
    e0 = net.stored_energy()
    for _ in range(1000):
        net.solve_step()
    assert net.stored_energy() == pytest.approx(e0, rel=1e-9)


def test_open_breaker_current_decays():
    net, _, sw, ind = rl_circuit(DT, with_switch=True)
    for _ in range(int(round(0.5 / DT))):
        net.solve_step()
    assert net.element_current(ind) > 0.99
    net.apply_switch(SwitchEvent(sw, "open"))
    for _ in range(int(round(0.5 / DT))):
        net.solve_step()
        assert abs(net.element_current(ind)) < 1e-6


def test_noop_switch_keeps_factorization():
    net, _, sw, _ = rl_circuit(DT, with_switch=True)
    net.solve_step()
    count = net.factorizations
    g_before = net.conductance_matrix().copy()
    assert net.apply_switch(SwitchEvent(sw, "closed")) is False
    net.solve_step()
    assert net.factorizations == count
    np.testing.assert_array_equal(net.conductance_matrix(), g_before)


def test_piecewise_close_open_waveform():
    net, _, sw, ind = rl_circuit(DT, with_switch=True)
    net.apply_switch(SwitchEvent(sw, "open"))
    net.solve_step()
    net.apply_switch(SwitchEvent(sw, "closed"))
    t_close = DT
    t1 = 0.15
    worst = 0.0
    k = 1
    while k * DT < 0.4:
        k += 1
        t = k * DT
        if abs(t - t1) < DT / 2:
            net.apply_switch(SwitchEvent(sw, "open"))
        net.solve_step()
        exact = 1.0 - math.exp(-(t - t_close) / 0.1) if t < t1 - DT / 2 else 0.0
        worst = max(worst, abs(net.element_current(ind) - exact))
    assert worst < 1e-3


def test_unknown_switch_rejected():
    net, _, _, _ = rl_circuit(DT)
    with pytest.raises(NetworkError):
        net.apply_switch(SwitchEvent(99, "open"))
    with pytest.raises(NetworkError):
        net.apply_switch(SwitchEvent("nope", "open"))


def test_refactorization_matches_fresh_build():
    def build(state):
        net = NodalSystem(DT)
        a = net.add_bus(1)
        b = net.add_bus(2)
        for p in range(3):
            net.stamp_element("ideal-source", math.cos(-2 * math.pi * p / 3), (a[p], GROUND))
            net.stamp_element("switch", {"state": state}, (a[p], b[p]))
            net.stamp_element("RL", {"r": 0.1, "l": 1e-3}, (b[p], GROUND))
            net.stamp_element("C", 1e-5, (b[p], GROUND))
        return net

    switched = build("open")
    switched.solve_step()
    for el in switched.elements:
        if el.kind == "switch":
            el.state = "closed"
    switched._g_dirty = True
    fresh = build("closed")
    v1 = switched.solve_step()
    v2 = fresh.solve_step()
    assert np.max(np.abs(v1 - v2)) < 1e-10


def test_fault_events_and_validation():
    net = NodalSystem(DT)
    net.add_bus(5, z_base=1.0)
    on, off = net.apply_fault(FaultSpec(bus=5, t_on=15.0, duration=0.15, fault_r=0.01))
    assert on.time == 15.0 and on.state == "closed"
    assert off.time == pytest.approx(15.15) and off.state == "open"
    with pytest.raises(NetworkError):
        net.apply_fault(FaultSpec(bus=5, t_on=15.1, duration=0.1))
    with pytest.raises(NetworkError):
        net.apply_fault(FaultSpec(bus=7, t_on=1.0, duration=0.1))
    with pytest.raises(ValueError):
        FaultSpec(bus=5, t_on=1.0, duration=0.0)


def test_fault_voltage_divider():
    # source 1.0 pu behind a Thevenin reactance of 0.2 pu; fault of 1e-3 ohm on a 1-ohm base
    w = 2 * math.pi * 60
    l_th = 0.2 / w
    net = NodalSystem(DT)
    src = net.add_node(3)
    bus = net.add_bus(1, z_base=1.0)
    sources = []
    for p in range(3):
        sources.append(net.stamp_element("ideal-source", 0.0, (src[p], GROUND)))
        net.stamp_element("L", l_th, (src[p], bus[p]))
    on, _ = net.apply_fault(FaultSpec(bus=1, t_on=0.0, duration=1.0, fault_r=1e-3))
    net.apply_switch(on)
    last_cycle = []
    for k in range(1, int(round(0.1 / DT)) + 1):
        t = k * DT
        for p in range(3):
            net.set_source(sources[p], math.cos(w * t - 2 * math.pi * p / 3))
        v = net.solve_step()
        if t > 0.1 - 1 / 60:
            last_cycle.append(v[list(bus)])
    last_cycle = np.array(last_cycle)
    # half peak-to-peak removes the decaying dc offset of the fault current
    amplitude = (last_cycle.max(axis=0) - last_cycle.min(axis=0)) / 2
    divider = 1e-3 / abs(complex(1e-3, 0.2))
    assert np.all(amplitude < 0.01)
    np.testing.assert_allclose(amplitude, divider, rtol=0.02)
