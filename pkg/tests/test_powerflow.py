import math
from dataclasses import replace

import numpy as np
import pytest

from owf_emt import DATA_DIR
from owf_emt.case_model import load_case, parse_case
from owf_emt.powerflow import (
    PowerFlowError,
    flat_snapshot,
    power_balance,
    snapshot_for_emt,
    solve_powerflow,
)

TWO_BUS = """
[SYSTEM]
mva_base 100
[BUS]
1 230 slack 1 1.0
2 230 PQ 1
[BRANCH]
L12 1 2 0.0 {x} 0.0
[LOAD]
LD2 2 {p} 0.0
[SG]
G1 1 200 0.5 4.0 1.8 1.7 0.3 0.4 0.003
"""


def two_bus_oracle(p, x):
    """Lossless line, unity-voltage slack, load P at bus 2 with Q = 0.

    Reactive balance at bus 2 gives V2 = cos(d); the active balance then
    reads p = sin(2d) / (2x), which inverts in closed form.
    """
    d = 0.5 * math.asin(2.0 * p * x)
    return math.cos(d), -d


def gauss_seidel(case, iters=20000, accel=1.4):
    """Plain Gauss-Seidel power flow with its own admittance matrix."""
    ids = [b.id for b in case.buses]
    idx = {b: k for k, b in enumerate(ids)}
    n = len(ids)
    y = np.zeros((n, n), dtype=complex)
    for br in case.branches:
        i, j = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        y[i, i] += ys + 0.5j * br.b_shunt
        y[j, j] += ys + 0.5j * br.b_shunt
        y[i, j] -= ys
        y[j, i] -= ys
    s = np.zeros(n, dtype=complex)
    for ld in case.loads:
        s[idx[ld.bus]] -= complex(ld.p0, ld.q0)
    for g in case.gfl_plants:
        s[idx[g.bus]] += complex(g.p_ref, g.q_ref) * g.mva_base / case.system_mva_base
    for sg in case.sg_plants:
        s[idx[sg.bus]] += sg.p * sg.mva_base / case.system_mva_base
    v = np.array([b.v_set if b.type != "PQ" else 1.0 for b in case.buses], dtype=complex)
    for _ in range(iters):
        for k, b in enumerate(case.buses):
            if b.type == "slack":
                continue
            sk = s[k]
            if b.type == "PV":
                sk = complex(sk.real, (v[k] * np.conj(y[k] @ v)).imag)
            vk = (np.conj(sk / v[k]) - (y[k] @ v - y[k, k] * v[k])) / y[k, k]
            vk = v[k] + accel * (vk - v[k])
            if b.type == "PV":
                vk = b.v_set * vk / abs(vk)
            v[k] = vk
    return dict(zip(ids, v))


@pytest.mark.parametrize("p,x", [(1.0, 0.1), (0.5, 0.2), (2.0, 0.05)])
def test_two_bus_matches_closed_form(p, x):
    case = parse_case(TWO_BUS.format(p=p, x=x))
    sol = solve_powerflow(case)
    vm, va = two_bus_oracle(p, x)
    assert sol.vm[1] == pytest.approx(vm, abs=1e-8)
    assert sol.va[1] == pytest.approx(va, abs=1e-8)


def test_fixture_converges_fast():
    case = load_case(DATA_DIR / "nine_bus.case")
    sol = solve_powerflow(case)
    assert sol.iterations <= 10
    assert sol.max_residual < 1e-8
    assert abs(power_balance(case, sol)) < 1e-6


def test_fixture_matches_gauss_seidel():
    case = load_case(DATA_DIR / "nine_bus.case")
    sol = solve_powerflow(case)
    ref = gauss_seidel(case, iters=3000)
    for bid, v in ref.items():
        assert sol.voltage(bid) == pytest.approx(v, abs=1e-6)


def test_bus_order_does_not_matter():
    case = load_case(DATA_DIR / "nine_bus.case")
    shuffled = replace(case, buses=tuple(reversed(case.buses)))
    a, b = solve_powerflow(case), solve_powerflow(shuffled)
    for bid in a.bus_ids:
        assert a.voltage(bid) == pytest.approx(b.voltage(bid), abs=1e-10)


def test_device_split_and_snapshot():
    case = load_case(DATA_DIR / "nine_bus.case")
    sol = solve_powerflow(case)
    # non-slack machines keep their dispatch; the slack machine covers the rest
    assert sol.device_pq["G2"][0] == pytest.approx(0.6 * 6000 / 1000)
    assert sol.device_pq["IBR6"] == pytest.approx((1.2, 0.15))
    snap = snapshot_for_emt(sol, case)
    assert snap.device_targets["G2"][0] == pytest.approx(0.6)
    assert snap.phasor(1) == pytest.approx(1.03)
    text = snap.to_text()
    assert text.startswith("BEGIN INIT SNAPSHOT") and text.endswith("END INIT SNAPSHOT")
    assert sum(line.startswith("bus ") for line in text.splitlines()) == 9


def test_flat_snapshot_is_unity():
    case = load_case(DATA_DIR / "nine_bus.case")
    snap = flat_snapshot(case)
    assert all(b.magnitude == 1.0 and b.phase == 0.0 for b in snap.buses.values())


def test_divergence_raises():
    case = parse_case(TWO_BUS.format(p=20.0, x=0.1))
    with pytest.raises(PowerFlowError):
        solve_powerflow(case)


def test_zero_impedance_rejected():
    case = parse_case(TWO_BUS.format(p=1.0, x=0.1))
    case = replace(case, branches=(replace(case.branches[0], x=0.0),))
    with pytest.raises(PowerFlowError):
        solve_powerflow(case)
