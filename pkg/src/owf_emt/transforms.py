"""Three-phase reference-frame helpers.

All quantities are amplitude-invariant: a balanced set with peak 1.0 has a
space vector of magnitude 1.0, and complex power is ``v * conj(i)``.
"""
import cmath
import math

SQRT3 = math.sqrt(3.0)
TWO_PI = 2.0 * math.pi
_A = cmath.exp(2j * math.pi / 3.0)


def abc_to_vec(a, b, c):
    """Space vector (alpha + j beta) of three instantaneous phase values."""
    return complex((2.0 * a - b - c) / 3.0, (b - c) / SQRT3)


def vec_to_abc(v):
    """Inverse of :func:`abc_to_vec` for a zero-sequence-free set."""
    re, im = v.real, v.imag
    return (re, -0.5 * re + 0.5 * SQRT3 * im, -0.5 * re - 0.5 * SQRT3 * im)


def abc_to_dq(a, b, c, theta):
    """Park transform; the d axis sits at angle ``theta`` in the stationary frame."""
    v = abc_to_vec(a, b, c) * complex(math.cos(theta), -math.sin(theta))
    return v.real, v.imag


def dq_to_abc(d, q, theta):
    return vec_to_abc(complex(d, q) * complex(math.cos(theta), math.sin(theta)))


def phasor_to_abc(mag, angle, t, omega):
    """Instantaneous phase values of a balanced positive-sequence set."""
    return vec_to_abc(cmath.rect(mag, angle + omega * t))


def instantaneous_power(va, vb, vc, ia, ib, ic):
    """Three-phase active power in amplitude-invariant per unit."""
    return (2.0 / 3.0) * (va * ia + vb * ib + vc * ic)


def wrap_angle(theta):
    """Wrap to [0, 2*pi)."""
    theta = math.fmod(theta, TWO_PI)
    if theta < 0.0:
        theta += TWO_PI
    if theta >= TWO_PI:
        theta = 0.0
    return theta
