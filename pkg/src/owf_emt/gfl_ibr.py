"""Grid-following inverter: SRF-PLL, droop with deadbands, limited current source.

The plant injects a three-phase current built from dq commands at the PLL
angle.  Plant quantities are per unit on the plant base.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .transforms import TWO_PI, abc_to_vec, vec_to_abc

OMEGA_MIN = 0.9
OMEGA_MAX = 1.1


@dataclass(frozen=True)
class PllState:
    theta: float = 0.0
    omega: float = 1.0
    integ: float = 0.0


def pll_gains(bandwidth_hz, zeta, omega_b):
    """PI gains (kp, ki) of a second-order SRF-PLL at unit voltage."""
    wn = TWO_PI * bandwidth_hz
    return 2.0 * zeta * wn / omega_b, wn * wn / omega_b


def pll_step(state, v_abc, dt, kp, ki, omega_b):
    """Advance the PLL by one step using the voltage measured at its angle.

    The q-axis voltage is driven to zero by a PI regulator whose output is
    the speed deviation.  Speed is clamped to [0.9, 1.1] pu with the
    integrator held at the clamp.
    """
    v = abc_to_vec(*v_abc)
    vq = v.imag * math.cos(state.theta) - v.real * math.sin(state.theta)
    integ = state.integ + ki * vq * dt
    integ = min(max(integ, OMEGA_MIN - 1.0), OMEGA_MAX - 1.0)
    omega = min(max(1.0 + kp * vq + integ, OMEGA_MIN), OMEGA_MAX)
    theta = (state.theta + omega_b * omega * dt) % TWO_PI
    return PllState(theta, omega, integ)


def _beyond(x, band):
    """Part of ``x`` outside the symmetric deadband, zero inside."""
    if x > band:
        return x - band
    if x < -band:
        return x + band
    return 0.0


def droop_response(freq, v_mag, params, f_nom=60.0, v_ref=1.0):
    """Return (dp, dq) in per unit for measured frequency (Hz) and voltage.

    Both deviations pass through their deadband first; only the excess is
    multiplied by the droop gain.
    """
    df = _beyond(freq - f_nom, params.freq_deadband)
    dv = _beyond(v_mag - v_ref, params.volt_deadband)
    return -params.kf * df / f_nom, -params.kv * dv


def ramp_refs(state, target_p, target_q, ramp_rate, dt):
    """Move ``state.p_ref``/``state.q_ref`` toward the targets by at most ``ramp_rate*dt``."""
    step = ramp_rate * dt
    state.p_ref += min(max(target_p - state.p_ref, -step), step)
    state.q_ref += min(max(target_q - state.q_ref, -step), step)
    return state


def limit_current(i_d, i_q, i_max):
    """P-priority current limit: the d axis is served first."""
    i_d = min(max(i_d, -i_max), i_max)
    room = math.sqrt(max(i_max * i_max - i_d * i_d, 0.0))
    return i_d, min(max(i_q, -room), room)


@dataclass
class GflState:
    pll: PllState = field(default_factory=PllState)
    p_ref: float = 0.0
    q_ref: float = 0.0
    p_cmd: float = 0.0
    q_cmd: float = 0.0
    id_cmd: float = 0.0
    iq_cmd: float = 0.0
    i_d: float = 0.0
    i_q: float = 0.0
    freq: float = 60.0
    v_meas: float = 1.0
    dp: float = 0.0
    dq: float = 0.0
    limited: bool = False


class GflInverter:
    """Grid-following plant driven by the network voltage at its bus.

    Parameters
    ----------
    plant : GflPlant
    system_mva_base : float
    omega_b : float
        Nominal angular frequency, rad/s.
    f_nom : float
        Nominal frequency, Hz.
    dt : float
    """

    def __init__(self, plant, system_mva_base, omega_b, f_nom, dt):
        self.plant = plant
        self.scale = plant.mva_base / system_mva_base
        self.wb = omega_b
        self.f_nom = f_nom
        self.dt = dt
        self.kp, self.ki = pll_gains(plant.pll_bw_hz, plant.pll_zeta, omega_b)
        self.state = GflState(freq=f_nom)
        self.target_p = 0.0
        self.target_q = 0.0
        self.ramp_rate = 0.0
        self.ramping = False
        self.droop_enabled = True
        self.v_ref = 1.0
        self._a_cur = 1.0 - math.exp(-dt / plant.t_current)
        self._a_v = 1.0 - math.exp(-dt / plant.t_vmeas)

    def initialize(self, v_phasor, t, p_target=None, q_target=None):
        """Lock the PLL to a balanced bus voltage at time ``t``.

        References start at zero; call :meth:`start_ramp` to bring them to
        the targets (defaults: the plant's scheduled p_ref and q_ref).
        """
        theta = (math.atan2(v_phasor.imag, v_phasor.real) + self.wb * t) % TWO_PI
        self.state = GflState(pll=PllState(theta, 1.0, 0.0), freq=self.f_nom, v_meas=abs(v_phasor))
        self.v_ref = abs(v_phasor)
        self.target_p = self.plant.p_ref if p_target is None else p_target
        self.target_q = self.plant.q_ref if q_target is None else q_target

    def start_ramp(self, duration):
        """Ramp references from their present value to the targets over ``duration`` s."""
        span = max(abs(self.target_p - self.state.p_ref), abs(self.target_q - self.state.q_ref))
        self.ramp_rate = span / duration if duration > 0 else math.inf
        self.ramping = True

    def injection(self):
        """Phase currents (system base) for the coming step, at the PLL angle."""
        s = self.state
        th = s.pll.theta
        c, sn = math.cos(th), math.sin(th)
        vec = complex(s.i_d * c - s.i_q * sn, s.i_d * sn + s.i_q * c)
        a, b, cc = vec_to_abc(vec)
        sc = self.scale
        return [a * sc, b * sc, cc * sc]

    def update(self, v_abc):
        """Consume the solved bus voltage (system pu) and update commands."""
        s, p, dt = self.state, self.plant, self.dt
        v = abc_to_vec(*v_abc)
        s.v_meas += self._a_v * (abs(v) - s.v_meas)
        s.pll = pll_step(s.pll, v_abc, dt, self.kp, self.ki, self.wb)
        s.freq += self._a_v * (s.pll.omega * self.f_nom - s.freq)
        if self.ramping:
            ramp_refs(s, self.target_p, self.target_q, self.ramp_rate, dt)
            if s.p_ref == self.target_p and s.q_ref == self.target_q:
                self.ramping = False
        if self.droop_enabled:
            s.dp, s.dq = droop_response(s.freq, s.v_meas, p, self.f_nom, self.v_ref)
        else:
            s.dp = s.dq = 0.0
        s.p_cmd = s.p_ref + s.dp
        s.q_cmd = s.q_ref + s.dq
        vm = max(s.v_meas, 0.01)
        id_raw, iq_raw = s.p_cmd / vm, -s.q_cmd / vm
        s.id_cmd, s.iq_cmd = limit_current(id_raw, iq_raw, p.i_max)
        s.limited = (s.id_cmd, s.iq_cmd) != (id_raw, iq_raw)
        s.i_d += self._a_cur * (s.id_cmd - s.i_d)
        s.i_q += self._a_cur * (s.iq_cmd - s.i_q)

    def step(self, v_abc):
        """Standalone step: update from ``v_abc`` and return the plant-base current."""
        self.update(v_abc)
        return [x / self.scale for x in self.injection()]
