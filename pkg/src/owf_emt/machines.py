"""Two-axis synchronous generator with a single-lag exciter and droop governor.

The machine attaches to the network as an EMF behind its transient
reactance.  The reactance is integrated with the same trapezoidal companion
the network uses, so the machine presents a constant conductance plus a
history injection.  The EMF enters as the rotor flux increment over each
step, which keeps the stator transient damped by the rotor circuits.
All machine quantities are per unit on the machine base;
:meth:`SyncMachine.norton` converts to the system base.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import IntEnum

from .case_model import ExciterParams, GovernorParams
from .emt_network import G_IDEAL_SOURCE
from .transforms import TWO_PI, abc_to_vec, vec_to_abc


class SgMode(IntEnum):
    VOLTAGE_SOURCE = 0
    CONSTANT_SPEED = 1
    EXCITER_ON = 2
    GOVERNOR_ON = 3


class MachineError(Exception):
    pass


@dataclass
class SgState:
    theta: float = 0.0  # d-axis position in the stationary frame
    speed: float = 1.0
    eqp: float = 0.0
    edp: float = 0.0
    efd: float = 0.0
    pm: float = 0.0
    efd0: float = 0.0
    vref: float = 1.0
    pref: float = 0.0
    i_d: float = 0.0
    i_q: float = 0.0
    vt: float = 1.0
    te: float = 0.0
    pe: float = 0.0
    mode: SgMode = SgMode.VOLTAGE_SOURCE
    initialized: bool = False


def exciter_step(efd, vt, vref, efd0, params: ExciterParams, dt):
    """Advance the single-lag regulator ``Ta dEfd/dt = Efd0 + Ka (Vref - Vt) - Efd``.

    Trapezoidal with the input held over the step, then clamped to the
    ceiling limits.
    """
    target = efd0 + params.ka * (vref - vt)
    a = 0.5 * dt / params.ta
    new = ((1.0 - a) * efd + 2.0 * a * target) / (1.0 + a)
    return min(max(new, params.efd_min), params.efd_max)


def governor_step(pm, speed, pref, params: GovernorParams, dt):
    """Droop governor with a first-order actuator; frozen when disabled."""
    if not params.enabled:
        return pm
    target = pref - (speed - 1.0) / params.r
    a = 0.5 * dt / params.tg
    new = ((1.0 - a) * pm + 2.0 * a * target) / (1.0 + a)
    return min(max(new, params.pmin), params.pmax)


class SyncMachine:
    """One synchronous generator plant.

    Parameters
    ----------
    plant : SgPlant
        Case record; impedances and inertia on the machine base.
    system_mva_base : float
    omega_b : float
        Nominal angular frequency in rad/s.
    dt : float
        Network time step in seconds.
    """

    def __init__(self, plant, system_mva_base, omega_b, dt):
        self.plant = plant
        self.scale = plant.mva_base / system_mva_base
        self.wb = omega_b
        self.dt = dt
        ell = plant.xd_p / omega_b
        self.g = 1.0 / (2.0 * ell / dt + plant.ra)
        self.k = 2.0 * ell / dt - plant.ra
        self.state = SgState()
        self.i_abc = [0.0, 0.0, 0.0]
        self.v_prev = [0.0, 0.0, 0.0]
        self.psi_prev = 0j
        self._psi_next = 0j
        self._e_next = (0.0, 0.0, 0.0)
        self._theta_next = 0.0
        self.source_vec = 0j  # ideal-source phasor used before the swap

    # ---------------------------------------------------------------- setup
    def initialize(self, v, i, t):
        """Set all states for balanced steady state at time ``t``.

        ``v`` and ``i`` are terminal voltage and injected current phasors on
        the machine base, referred to the synchronous frame at ``t = 0``.
        """
        p = self.plant
        s = self.state
        e_q = v + complex(p.ra, p.xq) * i
        delta = cmath.phase(e_q)
        rot = cmath.exp(-1j * (delta - math.pi / 2.0))
        vdq, idq = v * rot, i * rot
        s.i_d, s.i_q = idq.real, idq.imag
        s.edp = (p.xq - p.xq_p) * s.i_q
        s.eqp = vdq.imag + p.ra * s.i_q + p.xd_p * s.i_d
        s.efd = s.eqp + (p.xd - p.xd_p) * s.i_d
        s.te = s.edp * s.i_d + s.eqp * s.i_q + (p.xq_p - p.xd_p) * s.i_d * s.i_q
        s.pm = s.pref = s.te
        s.efd0 = s.efd
        s.vref = abs(v)
        s.vt = abs(v)
        s.pe = (v * i.conjugate()).real
        s.speed = 1.0
        s.theta = (self.wb * t + delta - math.pi / 2.0) % TWO_PI
        s.initialized = True
        self.source_vec = v
        # companion history consistent with the sinusoidal steady state
        rot_t = cmath.exp(1j * self.wb * t)
        self.i_abc = list(vec_to_abc(i * rot_t))
        self.v_prev = list(vec_to_abc(v * rot_t))
        self.psi_prev = self._rotor_flux(s.theta)

    def _rotor_flux(self, theta):
        """Stator flux linkage due to the rotor circuits, as a space vector."""
        p, s = self.plant, self.state
        e_d = s.edp + (p.xq_p - p.xd_p) * s.i_q
        return complex(s.eqp, -e_d) * complex(math.cos(theta), math.sin(theta))

    def set_mode(self, mode):
        mode = SgMode(mode)
        if mode < self.state.mode:
            raise MachineError(f"{self.plant.id}: mode cannot go back from {self.state.mode.name} to {mode.name}")
        self.state.mode = mode

    @property
    def conductance(self):
        """Per-phase shunt conductance on the system base for the present mode."""
        if self.state.mode == SgMode.VOLTAGE_SOURCE:
            return G_IDEAL_SOURCE
        return self.g * self.scale

    def swap_to_machine(self, v_vec, i_vec, t):
        """Replace the ideal source by the machine model at time ``t``.

        ``v_vec`` and ``i_vec`` are the measured terminal voltage and current
        space vectors at ``t`` on the system base.  The machine states are
        re-derived from them so the handover is quiet.
        """
        rot = cmath.exp(-1j * self.wb * t)
        self.initialize(v_vec * rot, i_vec * rot / self.scale, t)

    # ------------------------------------------------------------- stepping
    def norton(self, t_next):
        """Injection (system base, per phase) for the step ending at ``t_next``."""
        s = self.state
        if not s.initialized:
            raise MachineError(f"{self.plant.id}: machine used before initialization")
        if s.mode == SgMode.VOLTAGE_SOURCE:
            e = vec_to_abc(self.source_vec * cmath.exp(1j * self.wb * t_next))
            self._e_next = e
            return [G_IDEAL_SOURCE * x for x in e]
        th = s.theta + self.wb * s.speed * self.dt
        self._theta_next = th
        # mean back-EMF over the step from the rotor flux increment; using the
        # flux rather than the EMF keeps the rotor circuits' damping of the
        # stator transient
        psi = self._rotor_flux(th)
        self._psi_next = psi
        e = vec_to_abc((psi - self.psi_prev) / (self.wb * self.dt))
        self._e_next = e
        g, k, sc = self.g, self.k, self.scale
        return [sc * g * (2.0 * e[j] - self.v_prev[j] + k * self.i_abc[j]) for j in range(3)]

    def update(self, v_abc):
        """Consume the solved terminal voltage and advance the states.

        Returns the injected phase currents on the system base.
        """
        s = self.state
        e = self._e_next
        if s.mode == SgMode.VOLTAGE_SOURCE:
            i_sys = [G_IDEAL_SOURCE * (e[j] - v_abc[j]) for j in range(3)]
            self.i_abc = [x / self.scale for x in i_sys]
            return i_sys
        g, k = self.g, self.k
        i_new = [g * (2.0 * e[j] - v_abc[j] - self.v_prev[j] + k * self.i_abc[j]) for j in range(3)]
        self.v_prev = list(v_abc)
        self.i_abc = i_new
        self.psi_prev = self._psi_next
        th = self._theta_next
        rot = complex(math.cos(th), -math.sin(th))
        idq = abc_to_vec(*i_new) * rot
        vvec = abc_to_vec(*v_abc)
        vdq = vvec * rot
        s.i_d, s.i_q = idq.real, idq.imag
        s.vt = abs(vdq)
        s.pe = (vdq * idq.conjugate()).real
        self._advance(th)
        return [x * self.scale for x in i_new]

    def _derivatives(self, eqp, edp, speed, efd, pm):
        p, s = self.plant, self.state
        d_eqp = (-eqp - (p.xd - p.xd_p) * s.i_d + efd) / p.td0_p
        d_edp = (-edp + (p.xq - p.xq_p) * s.i_q) / p.tq0_p
        te = edp * s.i_d + eqp * s.i_q + (p.xq_p - p.xd_p) * s.i_d * s.i_q
        d_speed = 0.0
        if s.mode >= SgMode.GOVERNOR_ON:
            d_speed = (pm - te - p.d * (speed - 1.0)) / (2.0 * p.h)
        return d_eqp, d_edp, d_speed, te

    def _advance(self, theta_used):
        """Heun step of the flux and swing states, then the controllers."""
        p, s, dt = self.plant, self.state, self.dt
        x0 = (s.eqp, s.edp, s.speed)
        k1 = self._derivatives(s.eqp, s.edp, s.speed, s.efd, s.pm)
        xp = [x0[j] + dt * k1[j] for j in range(3)]
        k2 = self._derivatives(*xp, s.efd, s.pm)
        s.eqp = x0[0] + 0.5 * dt * (k1[0] + k2[0])
        s.edp = x0[1] + 0.5 * dt * (k1[1] + k2[1])
        speed0 = s.speed
        if s.mode >= SgMode.GOVERNOR_ON:
            s.speed = x0[2] + 0.5 * dt * (k1[2] + k2[2])
        else:
            s.speed = 1.0
        s.te = k2[3]
        if s.mode >= SgMode.EXCITER_ON:
            s.efd = exciter_step(s.efd, s.vt, s.vref, s.efd0, p.exciter, dt)
        if s.mode >= SgMode.GOVERNOR_ON:
            s.pm = governor_step(s.pm, s.speed, s.pref, p.governor, dt)
        # the EMF used this step advanced with the old speed; correct to the
        # trapezoidal mean so the angle stays second order
        s.theta = (theta_used + 0.5 * self.wb * dt * (s.speed - speed0)) % TWO_PI

    def step(self, v_abc, t_next):
        """Standalone step against a prescribed terminal voltage.

        Returns the injected currents on the machine base.
        """
        self.norton(t_next)
        i_sys = self.update(v_abc)
        return [x / self.scale for x in i_sys]
