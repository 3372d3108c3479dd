"""Aggregated Type-4 offshore wind plant with averaged back-to-back converters.

A plant of ``n`` identical turbines is represented by one equivalent turbine
on the plant base (``n`` x turbine rating), so per-unit behaviour does not
depend on ``n`` and the injected current scales linearly with it.

Power flow inside one turbine::

    wind -> rotor (pitch, MPPT) -> PMSG stator -> rotor-side converter
         -> DC link (+ chopper) -> grid-side converter -> filter -> collector

Sign conventions: P > 0 flows from the turbine toward the grid.  The
grid-side converter current is taken positive into the network; the
rotor-side machine current is in generator convention.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache

from scipy.optimize import minimize_scalar

from .gfl_ibr import PllState, pll_gains, pll_step
from .transforms import TWO_PI, abc_to_vec, vec_to_abc


class OwfError(Exception):
    """Numerical failure inside a wind plant (for example DC-link collapse)."""


# ---------------------------------------------------------------- aerodynamics
def power_coefficient(lam, beta, p):
    """Exponential-form Cp(lambda, beta); negative values are clipped to zero."""
    if lam <= 0.0:
        return 0.0
    inv = 1.0 / (lam + 0.08 * beta) - 0.035 / (beta ** 3 + 1.0)
    cp = p.cp_c1 * (p.cp_c2 * inv - p.cp_c3 * beta - p.cp_c4) * math.exp(-p.cp_c5 * inv) + p.cp_c6 * lam
    return max(cp, 0.0)


@lru_cache(maxsize=32)
def cp_optimum(p):
    """(lambda_opt, cp_max) at zero pitch."""
    res = minimize_scalar(lambda x: -power_coefficient(x, 0.0, p), bounds=(2.0, 20.0),
                          method="bounded", options={"xatol": 1e-10})
    return float(res.x), -float(res.fun)


@dataclass(frozen=True)
class RotorRating:
    """Rated wind speed and mechanical speed implied by the turbine data."""

    lam_opt: float
    cp_max: float
    area: float
    v_rated: float
    omega_mech: float  # rad/s at 1 pu rotor speed

    @classmethod
    def from_params(cls, p, turbine_mw):
        lam, cp = cp_optimum(p)
        area = math.pi * p.rotor_radius ** 2
        v_rated = (turbine_mw * 1e6 / (0.5 * p.air_density * area * cp)) ** (1.0 / 3.0)
        return cls(lam, cp, area, v_rated, lam * v_rated / p.rotor_radius)


def aero_power(v_wind, omega, beta, p, rating, turbine_mw, cut_in=4.0, cut_out=25.0):
    """Mechanical power of one turbine in per unit of its rating.

    Zero below cut-in and above cut-out.
    """
    if v_wind < cut_in or v_wind > cut_out or v_wind <= 0.0:
        return 0.0
    lam = omega * rating.omega_mech * p.rotor_radius / v_wind
    cp = power_coefficient(lam, beta, p)
    return 0.5 * p.air_density * rating.area * v_wind ** 3 * cp / (turbine_mw * 1e6)


def mppt_ref(omega, k_opt=1.0):
    """Power order ``k_opt * omega**3``, capped at rated power."""
    if omega <= 0.0:
        return 0.0
    return min(k_opt * omega ** 3, 1.0)


def lvrt_scale(v, v_low=0.3, v_high=0.9):
    """Active-power scale from the LVRT table: 0 below ``v_low``, 1 above ``v_high``."""
    if v >= v_high:
        return 1.0
    if v <= v_low:
        return 0.0
    return (v - v_low) / (v_high - v_low)


# ------------------------------------------------------------------- pitch
@dataclass
class TurbineMech:
    omega: float = 1.0
    beta: float = 0.0
    pitch_integ: float = 0.0


def pitch_step(state, omega, dt, p):
    """PI pitch regulator on the overspeed, with range and rate limits.

    The integrator is clamped to the pitch range, so the blade stays at
    zero until the rotor has exceeded ``omega_max``.
    """
    err = omega - p.omega_max
    state.pitch_integ = min(max(state.pitch_integ + p.pitch_ki * err * dt, 0.0), p.pitch_max)
    cmd = min(max(p.pitch_kp * err + state.pitch_integ, 0.0), p.pitch_max)
    step = p.pitch_rate * dt
    state.beta += min(max(cmd - state.beta, -step), step)
    return state.beta


# ----------------------------------------------------------------- DC link
@dataclass
class DcLink:
    v_dc: float = 1.0
    c_dc: float = 0.02
    chopper_on: bool = False
    chopper_enabled: bool = True
    v_on: float = 1.05
    v_off: float = 1.02
    r_chopper: float = 1.05 ** 2
    p_chopper: float = 0.0
    residual: float = 0.0

    @property
    def energy(self):
        return 0.5 * self.c_dc * self.v_dc ** 2


def chopper_step(link):
    """Hysteresis: switch on at ``v_on``, release at ``v_off``."""
    if not link.chopper_enabled:
        link.chopper_on = False
    elif link.v_dc >= link.v_on:
        link.chopper_on = True
    elif link.v_dc <= link.v_off:
        link.chopper_on = False
    return link.chopper_on


def dclink_step(link, p_in, p_out, dt):
    """Integrate the capacitor energy over one step.

    ``p_in`` and ``p_out`` are the step-average powers from the rotor-side
    and into the grid-side converter.  The chopper term is trapezoidal in
    the stored energy, so ``p_in - p_out - p_chopper`` equals the energy
    change over ``dt`` to rounding.
    """
    w0 = link.energy
    a = dt / (link.r_chopper * link.c_dc) if link.chopper_on else 0.0
    w1 = (w0 * (1.0 - a) + dt * (p_in - p_out)) / (1.0 + a)
    if not w1 > 0.0:
        raise OwfError("DC-link voltage collapsed")
    link.p_chopper = a * (w0 + w1) / dt
    link.v_dc = math.sqrt(2.0 * w1 / link.c_dc)
    link.residual = p_in - p_out - link.p_chopper - (w1 - w0) / dt
    return link.v_dc


# ------------------------------------------------------------------ controls
class PI:
    """PI regulator with output limits and a clamped integrator."""

    __slots__ = ("kp", "ki", "lo", "hi", "integ")

    def __init__(self, kp, ki, lo=-math.inf, hi=math.inf):
        self.kp, self.ki, self.lo, self.hi = kp, ki, lo, hi
        self.integ = 0.0

    def step(self, err, dt, freeze=False):
        if not freeze:
            self.integ = min(max(self.integ + self.ki * err * dt, self.lo), self.hi)
        return min(max(self.kp * err + self.integ, self.lo), self.hi)

    def output(self, err):
        return min(max(self.kp * err + self.integ, self.lo), self.hi)


def limit_dq(i_d, i_q, i_max):
    i_d = min(max(i_d, -i_max), i_max)
    room = math.sqrt(max(i_max * i_max - i_d * i_d, 0.0))
    return i_d, min(max(i_q, -room), room)


@dataclass
class GscMeasurements:
    v_dc: float
    v_poi: float
    q: float
    v_d: float
    v_q: float
    i_d: float
    i_q: float
    omega: float = 1.0
    freeze_vac: bool = False


class GscControl:
    """Grid-side converter: DC-voltage, POI-voltage and Q loops over dq current loops.

    The polarity factors multiply the loop errors, taken as DC ``V* - V``,
    AC ``V_poi - V*`` and Q ``Q* - Q``.  The defaults (-1) give a stable
    loop with this module's conventions.
    """

    def __init__(self, p, v_dc_ref=1.0, v_ac_ref=1.0):
        self.p = p
        self.v_dc_ref = v_dc_ref
        self.v_ac_ref = v_ac_ref
        self.vdc = PI(p.vdc_kp, p.vdc_ki, -p.i_max, p.i_max)
        self.vac = PI(p.vac_kp, p.vac_ki, -p.q_max, p.q_max)
        self.qloop = PI(p.q_kp, p.q_ki, -p.i_max, p.i_max)
        self.cc_d = PI(p.gsc_cc_kp, p.gsc_cc_ki, -2.0, 2.0)
        self.cc_q = PI(p.gsc_cc_kp, p.gsc_cc_ki, -2.0, 2.0)
        self.id_ref = self.iq_ref = self.q_ref = 0.0

    def step(self, m: GscMeasurements, dt):
        """Return the converter voltage command (u_d, u_q) in the PLL frame."""
        p = self.p
        id_ref = self.vdc.step(p.vdc_polarity * (self.v_dc_ref - m.v_dc), dt)
        q_ref = self.vac.step(p.vac_polarity * (m.v_poi - self.v_ac_ref), dt, freeze=m.freeze_vac)
        iq_ref = self.qloop.step(p.q_polarity * (q_ref - m.q), dt)
        id_ref, iq_ref = limit_dq(id_ref, iq_ref, p.i_max)
        self.id_ref, self.iq_ref, self.q_ref = id_ref, iq_ref, q_ref
        wl = m.omega * p.x_f
        u_d = self.cc_d.step(id_ref - m.i_d, dt) + m.v_d - wl * m.i_q
        u_q = self.cc_q.step(iq_ref - m.i_q, dt) + m.v_q + wl * m.i_d
        return u_d, u_q


def gsc_step(ctrl, meas, dt):
    return ctrl.step(meas, dt)


class RscControl:
    """Rotor-side converter: power and converter-voltage loops over current loops.

    Outer loops produce generator-convention current references; the inner
    loops act on the converter-convention current (``-i_g``) with the same
    decoupled structure as the grid side.
    """

    def __init__(self, p):
        self.p = p
        self.ploop = PI(p.p_kp, p.p_ki, -p.i_max, p.i_max)
        self.vloop = PI(p.vrsc_kp, p.vrsc_ki, -p.i_max, p.i_max)
        self.cc_d = PI(p.rsc_cc_kp, p.rsc_cc_ki, -2.0, 2.0)
        self.cc_q = PI(p.rsc_cc_kp, p.rsc_cc_ki, -2.0, 2.0)
        self.id_ref = self.iq_ref = 0.0

    def step(self, p_ref, p_meas, v_rsc, v_rsc_ref, emf, i_g, omega, dt):
        """Return the converter voltage command (complex, rotor frame)."""
        p = self.p
        id_ref = self.ploop.step(p_ref - p_meas, dt)
        iq_ref = self.vloop.step(p.vrsc_polarity * (v_rsc - v_rsc_ref), dt)
        id_ref, iq_ref = limit_dq(id_ref, iq_ref, p.i_max)
        self.id_ref, self.iq_ref = id_ref, iq_ref
        # converter convention
        ic = -i_g
        wl = omega * p.x_s
        u_d = self.cc_d.step(-id_ref - ic.real, dt) + emf.real - wl * ic.imag
        u_q = self.cc_q.step(-iq_ref - ic.imag, dt) + emf.imag + wl * ic.real
        return complex(u_d, u_q)


def rsc_step(ctrl, p_ref, p_meas, v_rsc, v_rsc_ref, emf, i_g, omega, dt):
    return ctrl.step(p_ref, p_meas, v_rsc, v_rsc_ref, emf, i_g, omega, dt)


# ------------------------------------------------------------------- plant
@dataclass
class OwfStatus:
    poi_connected: bool = False
    converter_closed: bool = False
    gsc_enabled: bool = False
    turbine_started: bool = False
    rsc_enabled: bool = False
    rotor_free: bool = False


@dataclass
class OwfOutputs:
    p_gsc: float = 0.0
    q_gsc: float = 0.0
    p_rsc: float = 0.0
    p_aero: float = 0.0
    p_order: float = 0.0
    lvrt: float = 1.0
    v_poi: float = 0.0
    wind: float = 0.0
    extra: dict = field(default_factory=dict)


class OwfModel:
    """One aggregated wind plant attached through its filter reactance.

    Parameters
    ----------
    plant : OwfPlant
    system_mva_base : float
    omega_b : float
    dt : float
    """

    def __init__(self, plant, system_mva_base, omega_b, dt):
        p = plant.params
        self.plant = plant
        self.p = p
        self.scale = plant.mva_base / system_mva_base
        self.wb = omega_b
        self.dt = dt
        self.rating = RotorRating.from_params(p, plant.turbine_mw)
        ell = p.x_f / omega_b
        self.g = 1.0 / (2.0 * ell / dt + p.r_f)
        self.k = 2.0 * ell / dt - p.r_f
        self.pll_kp, self.pll_ki = pll_gains(p.pll_bw_hz, p.pll_zeta, omega_b)
        self.pll = PllState()
        self.status = OwfStatus()
        self.mech = TurbineMech(omega=p.omega_min)
        self.dc = DcLink(
            v_dc=p.v_dc_ref, c_dc=p.c_dc, chopper_enabled=p.chopper_enabled,
            v_on=p.chopper_on, v_off=p.chopper_off, r_chopper=p.chopper_on ** 2 / p.chopper_power,
        )
        self.gsc = GscControl(p, p.v_dc_ref)
        self.rsc = RscControl(p)
        self.out = OwfOutputs()
        # filter companion state (plant base)
        self.i_abc = [0.0, 0.0, 0.0]
        self.v_prev = [0.0, 0.0, 0.0]
        self.e_prev = [0.0, 0.0, 0.0]
        self._e_next = [0.0, 0.0, 0.0]
        self.u_cmd = 0j  # GSC voltage command, PLL frame
        # machine side
        self.i_g = 0j
        self.v_rsc = 0j
        self.p_rsc_prev = 0.0
        self.p_gsc_prev = 0.0
        self.v_lvrt = 1.0
        self.v_poi_meas = 1.0
        self._a_lvrt = 1.0 - math.exp(-dt / p.t_lvrt)
        self._a_vac = 1.0 - math.exp(-dt / p.t_vac)
        self.p_order = 0.0
        self.q_meas = 0.0
        ls = p.x_s / omega_b
        self._ls_dt = ls / dt

    # ------------------------------------------------------------- staging
    def connect_poi(self, v_poi_phasor, t):
        """POI breaker closed: lock the PLL and set the POI voltage reference."""
        self.status.poi_connected = True
        self.pll = PllState((cmath.phase(v_poi_phasor) + self.wb * t) % TWO_PI, 1.0, 0.0)
        self.gsc.v_ac_ref = abs(v_poi_phasor)
        self.v_poi_meas = self.v_lvrt = abs(v_poi_phasor)

    def close_converter(self, v_abc):
        """Converter switch closed with the bridge blocked (EMF tracks the terminal)."""
        self.status.converter_closed = True
        self.v_prev = list(v_abc)
        self.e_prev = list(v_abc)
        self.i_abc = [0.0, 0.0, 0.0]

    def enable_gsc(self):
        self.status.gsc_enabled = True
        self.dc.v_dc = self.p.v_dc_ref

    def start_turbine(self, wind):
        """Spin the rotor to its MPPT speed and pre-position the pitch."""
        self.status.turbine_started = True
        self.mech.omega = self.equilibrium_speed(wind)
        self.mech.beta = self.mech.pitch_integ = self.equilibrium_pitch(wind, self.mech.omega)

    def enable_rsc(self):
        self.status.rsc_enabled = True
        self.p_order = 0.0

    @property
    def conductance(self):
        """Per-phase shunt conductance on the system base."""
        return self.g * self.scale if self.status.converter_closed else 0.0

    # ----------------------------------------------------------- operating point
    def equilibrium_speed(self, wind):
        p = self.p
        if wind < self.plant.cut_in or wind > self.plant.cut_out:
            return p.omega_min
        return min(max(wind / self.rating.v_rated, p.omega_min), p.omega_max)

    def equilibrium_pitch(self, wind, omega):
        """Smallest pitch that limits aero power to rated at ``omega``."""
        p = self.p
        f = lambda b: aero_power(wind, omega, b, p, self.rating, self.plant.turbine_mw,
                                 self.plant.cut_in, self.plant.cut_out)
        if f(0.0) <= mppt_ref(omega, p.k_opt) + 1e-12:
            return 0.0
        lo, hi = 0.0, p.pitch_max
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if f(mid) > 1.0:
                lo = mid
            else:
                hi = mid
        return hi

    def power_order(self, wind):
        """MPPT order, zero outside the cut-in/cut-out range."""
        if wind < self.plant.cut_in or wind > self.plant.cut_out:
            return 0.0
        return mppt_ref(self.mech.omega, self.p.k_opt)

    # ------------------------------------------------------------- stepping
    def injection(self, v_abc_now):
        """Phase-current injection (system base) for the coming step.

        ``v_abc_now`` is the terminal voltage at the start of the step; a
        blocked bridge follows it (rotated one step ahead) so it draws no
        current.
        """
        if not self.status.converter_closed:
            self._e_next = [0.0, 0.0, 0.0]
            return (0.0, 0.0, 0.0)
        if self.status.gsc_enabled:
            th = self.pll.theta
            e = vec_to_abc(self.u_cmd * complex(math.cos(th), math.sin(th)))
        else:
            e = vec_to_abc(abc_to_vec(*v_abc_now) * cmath.exp(1j * self.wb * self.dt))
        self._e_next = e
        g, k, sc = self.g, self.k, self.scale
        ep, vp, ip = self.e_prev, self.v_prev, self.i_abc
        return tuple(sc * g * (e[j] + ep[j] - vp[j] + k * ip[j]) for j in range(3))

    def update(self, v_abc, v_poi_abc, wind):
        """Consume the solved terminal and POI voltages and advance the plant.

        Returns the converter phase currents on the system base.
        """
        p, st, dt = self.p, self.status, self.dt
        out = self.out
        out.wind = wind
        e = self._e_next
        if st.converter_closed:
            g, k = self.g, self.k
            ep, vp, ip = self.e_prev, self.v_prev, self.i_abc
            i_new = [g * (e[j] - v_abc[j]) + g * (ep[j] - vp[j] + k * ip[j]) for j in range(3)]
        else:
            i_new = [0.0, 0.0, 0.0]
        self.i_abc = i_new
        self.v_prev = list(v_abc)
        self.e_prev = list(e)
        p_gsc = (2.0 / 3.0) * (e[0] * i_new[0] + e[1] * i_new[1] + e[2] * i_new[2])

        # measurements
        vpoi = abs(abc_to_vec(*v_poi_abc)) if st.poi_connected else 0.0
        self.v_poi_meas += self._a_vac * (vpoi - self.v_poi_meas)
        self.v_lvrt += self._a_lvrt * (vpoi - self.v_lvrt)
        out.v_poi = vpoi
        if st.poi_connected:
            self.pll = pll_step(self.pll, v_abc, dt, self.pll_kp, self.pll_ki, self.wb)
        th = self.pll.theta
        rot = complex(math.cos(th), -math.sin(th))
        vdq = abc_to_vec(*v_abc) * rot
        idq = abc_to_vec(*i_new) * rot
        q = vdq.imag * idq.real - vdq.real * idq.imag
        self.q_meas = q

        # machine side and rotor
        p_rsc = self._machine_side(wind)

        # DC link, trapezoidal averages of the end-point powers
        if st.gsc_enabled:
            dclink_step(self.dc, 0.5 * (p_rsc + self.p_rsc_prev), 0.5 * (p_gsc + self.p_gsc_prev), dt)
            chopper_step(self.dc)
        self.p_rsc_prev, self.p_gsc_prev = p_rsc, p_gsc

        # grid-side control for the next step
        if st.gsc_enabled:
            meas = GscMeasurements(
                self.dc.v_dc, self.v_poi_meas, q, vdq.real, vdq.imag, idq.real, idq.imag,
                self.pll.omega, freeze_vac=self.v_lvrt < p.lvrt_v_high,
            )
            ud, uq = self.gsc.step(meas, dt)
            self.u_cmd = complex(ud, uq)
        out.p_gsc, out.q_gsc, out.p_rsc = p_gsc, q, p_rsc
        sc = self.scale
        return [x * sc for x in i_new]

    def _machine_side(self, wind):
        p, st, dt, m = self.p, self.status, self.dt, self.mech
        out = self.out
        if not st.turbine_started:
            out.p_aero = 0.0
            return 0.0
        p_aero = aero_power(wind, m.omega, m.beta, p, self.rating, self.plant.turbine_mw,
                            self.plant.cut_in, self.plant.cut_out)
        out.p_aero = p_aero
        out.lvrt = lvrt_scale(self.v_lvrt, p.lvrt_v_low, p.lvrt_v_high)
        emf = complex(m.omega, 0.0)
        if st.rsc_enabled:
            target = self.power_order(wind) * out.lvrt
            if not st.rotor_free:
                self.p_order = min(self.p_order + p.p_ramp * dt, target)
                if self.p_order >= target:
                    st.rotor_free = True
            else:
                self.p_order = target
            p_meas = (self.v_rsc * self.i_g.conjugate()).real
            v_cmd = self.rsc.step(self.p_order, p_meas, abs(self.v_rsc), m.omega, emf, self.i_g, m.omega, dt)
            # stator: L di/dt = e - v - (r + j w x) i, trapezoidal with held inputs
            z = complex(p.r_s, m.omega * p.x_s)
            self.i_g = ((self._ls_dt - 0.5 * z) * self.i_g + (emf - v_cmd)) / (self._ls_dt + 0.5 * z)
            self.v_rsc = v_cmd
        out.p_order = self.p_order
        p_rsc = (self.v_rsc * self.i_g.conjugate()).real
        t_e = (emf * self.i_g.conjugate()).real / m.omega
        if st.rotor_free:
            t_aero = p_aero / m.omega
            m.omega = max(m.omega + dt * (t_aero - t_e) / (2.0 * p.h_turbine), 1e-3)
            pitch_step(m, m.omega, dt, p)
        return p_rsc

    def step(self, v_abc, wind, v_poi_abc=None):
        """Standalone step with the terminal voltage prescribed (plant base current)."""
        self.injection(v_abc)
        i_sys = self.update(v_abc, v_abc if v_poi_abc is None else v_poi_abc, wind)
        return [x / self.scale for x in i_sys]


def owf_step(model, v_abc, wind, v_poi_abc=None):
    return model.step(v_abc, wind, v_poi_abc)
