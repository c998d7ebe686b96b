"""Faulty single-qubit gate models and the composite rotation used for tilt calibration."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .linalg2 import IDENTITY, PAULI_X, PAULI_Z


def wrap_angle(x):
    """Map angles into ``(-pi, pi]``; works elementwise on arrays."""
    y = np.pi - np.mod(np.pi - np.asarray(x, dtype=float), 2 * np.pi)
    return float(y) if np.ndim(y) == 0 else y


@dataclass(frozen=True)
class GateParams:
    """Systematic errors of the gate-set.

    Attributes:
        alpha: fractional over-rotation of the Z_{pi/2} gate.
        epsilon: fractional over-rotation of the X gate.
        theta: tilt of the X gate's axis towards Z, in radians.
        phi: nominal X rotation angle in radians.
    """

    alpha: float = 0.0
    epsilon: float = 0.0
    theta: float = 0.0
    phi: float = math.pi / 4

    def __post_init__(self):
        for name in ("alpha", "epsilon", "theta", "phi"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"GateParams.{name} must be finite")
        object.__setattr__(self, "theta", wrap_angle(self.theta))


def z_gate(alpha: float) -> np.ndarray:
    """Faulty ``Z_{pi/2}``: ``cos(pi/4 (1+alpha)) I - i sin(pi/4 (1+alpha)) Z``."""
    half = math.pi / 4 * (1 + alpha)
    return math.cos(half) * IDENTITY - 1j * math.sin(half) * PAULI_Z


def x_gate(phi: float, epsilon: float, theta: float) -> np.ndarray:
    """Faulty X rotation by ``phi (1+epsilon)`` about ``cos(theta) X + sin(theta) Z``."""
    half = phi / 2 * (1 + epsilon)
    axis = math.cos(theta) * PAULI_X + math.sin(theta) * PAULI_Z
    return math.cos(half) * IDENTITY - 1j * math.sin(half) * axis


def gate_power(u: np.ndarray, k: int) -> np.ndarray:
    if k < 0:
        raise ValueError("gate power must be non-negative")
    return np.linalg.matrix_power(u, k)


def composite_u(epsilon: float, theta: float, alpha: float = 0.0, q: int = 4,
                phi: float = math.pi / 4) -> np.ndarray:
    """``Z X^q Z Z X^q Z`` with faulty X gates and (optionally) faulty Z gates."""
    z = z_gate(alpha)
    xq = gate_power(x_gate(phi, epsilon, theta), q)
    return z @ xq @ z @ z @ xq @ z


def composite_gate_sequence(epsilon: float, theta: float, alpha: float, q: int,
                            phi: float) -> list[np.ndarray]:
    """Elementary gates of one composite rotation, in application order."""
    z = z_gate(alpha)
    x = x_gate(phi, epsilon, theta)
    return [z] + [x] * q + [z, z] + [x] * q + [z]


class CompositeAxisResult(NamedTuple):
    """Rotation angle and axis of the composite rotation.

    ``big_phi`` lies in ``[0, pi]``; the axis ``(n_x, 0, n_z)`` carries the
    orientation so that ``x_gate(big_phi, 0, big_theta)`` induces the same
    channel as :func:`composite_u`.
    """

    big_phi: float
    big_theta: float
    n_x: float
    n_z: float

    @property
    def tilt(self) -> float:
        """Unsigned angle between the axis line and the X axis, ``arcsin |n_z|``."""
        return math.asin(min(1.0, abs(self.n_z)))


def composite_axis_angle(epsilon: float, theta: float, t: int = 1) -> CompositeAxisResult:
    """Closed-form rotation angle and axis of the composite rotation.

    ``t`` is the odd integer with ``q phi = t pi``; ``t = 1`` for the default
    ``q = 4``, ``phi = pi/4`` sequence.

    The closed form writes the axis with a negative X component.  The matrix
    itself rotates by the signed angle ``2 arcsin(s)`` about the opposite axis,
    so the reported axis is flipped accordingly and the angle made
    non-negative.  When ``s == 0`` the rotation is trivial and the closed-form
    axis is returned as is.
    """
    c = math.cos(math.pi * t * epsilon / 2)
    st = math.sin(theta)
    root = math.sqrt(1 - st * st * c * c)
    n_x = -math.cos(theta) * c / root
    n_z = math.sin(math.pi * t * epsilon / 2) / root
    s = 2 * st * c * root
    if s != 0:
        orient = -math.copysign(1.0, s)
        n_x, n_z = orient * n_x, orient * n_z
    big_phi = 2 * math.asin(min(1.0, abs(s)))
    return CompositeAxisResult(big_phi, math.atan2(n_z, n_x), n_x, n_z)


def signed_rotation_angle(u: np.ndarray) -> float:
    """Rotation angle of ``u`` about its axis oriented with non-negative X part.

    Writes ``u = e^{i g} (c I - i s . sigma)`` and fixes the global sign so
    that ``s_x >= 0``; returns the angle in ``(-pi, pi]``.  This is the phase
    that the cos/sin experiments with ``|0>`` measurement observe for
    rotations whose axis lies near the X axis of the XZ plane.
    """
    det = np.linalg.det(u)
    v = u / np.sqrt(det)
    c = 0.5 * np.trace(v)
    s = np.array([0.5j * np.trace(v @ p) for p in (PAULI_X, PAULI_Z)])
    c, s = c.real, s.real
    if s[0] < 0 or (s[0] == 0 and s[1] < 0):
        c, s = -c, -s
    return wrap_angle(2 * math.atan2(float(np.hypot(*s)), float(c)))


def choose_q_t(phi_over_pi) -> tuple[int, int, int, Fraction]:
    """Repetition count for the composite rotation of an arbitrary X angle.

    Args:
        phi_over_pi: the nominal angle divided by pi, as a ``Fraction``, an
            ``int`` or a string such as ``"2/3"``.  Floats are refused since
            the parity analysis needs exact integers.

    Returns:
        ``(q, t, s, target)`` where ``target`` is the calibrated angle over pi,
        ``q * target == t`` with ``t`` odd, and ``2**s`` rotations by
        ``target`` compose the requested angle.
    """
    if isinstance(phi_over_pi, float):
        raise TypeError("phi must be given as an exact fraction of pi, not a float")
    frac = Fraction(phi_over_pi)
    if frac <= 0:
        raise ValueError("phi must be a positive multiple of pi")
    a, b = frac.numerator, frac.denominator
    s = 0
    while a % 2 == 0:
        a //= 2
        s += 1
    target = Fraction(a, b)
    return b, a, s, target

