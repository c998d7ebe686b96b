"""Exact 2x2 operator algebra for a single qubit.

Operators are plain ``numpy`` arrays of shape ``(2, 2)`` and dtype complex.
Density operators and POVM effects are the same arrays, checked on demand by
:func:`as_density` and :func:`as_effect`.  Eigenvalues of Hermitian 2x2
matrices are always computed in closed form from the trace and determinant.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
POSITIVITY_TOL = 1e-12
UNITARY_TOL = 1e-10

IDENTITY = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (IDENTITY, PAULI_X, PAULI_Y, PAULI_Z)

_KETS = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "-": np.array([1, -1], dtype=complex) / np.sqrt(2),
    # +Y eigenstate; the right-arrow label is an alias
    "r": np.array([1, 1j], dtype=complex) / np.sqrt(2),
    "l": np.array([1, -1j], dtype=complex) / np.sqrt(2),
}
_KETS["\u2192"] = _KETS["r"]


def ket(label: str) -> np.ndarray:
    """Return the state vector for one of ``0, 1, +, -, r, l``."""
    try:
        return _KETS[label].copy()
    except KeyError:
        raise ValueError(f"unknown state label {label!r}; expected one of {sorted(_KETS)}") from None


def projector(label: str) -> np.ndarray:
    """Return the rank-one projector ``|label><label|``."""
    v = ket(label)
    return np.outer(v, v.conj())


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product ``a @ b``; ``b`` acts first."""
    return np.asarray(a, dtype=complex) @ np.asarray(b, dtype=complex)


def _check_finite(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.shape != (2, 2):
        raise ValueError(f"expected a 2x2 operator, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("operator has non-finite entries")
    return a


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    return bool(np.max(np.abs(a - dagger(a))) <= tol)


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    u = np.asarray(u)
    return bool(np.max(np.abs(u @ dagger(u) - IDENTITY)) <= tol)


def hermitian_eigvals(h: np.ndarray) -> tuple[float, float]:
    """Closed-form eigenvalues ``(low, high)`` of a Hermitian 2x2 matrix."""
    a = h[0, 0].real
    d = h[1, 1].real
    b = h[0, 1]
    mean = 0.5 * (a + d)
    radius = np.hypot(0.5 * (a - d), abs(b))
    return float(mean - radius), float(mean + radius)


def as_density(rho: np.ndarray) -> np.ndarray:
    """Validate and return ``rho`` as a density operator.

    Raises:
        ValueError: if ``rho`` is not Hermitian, not unit trace, or has an
            eigenvalue below ``-1e-12``.
    """
    rho = _check_finite(rho)
    if not is_hermitian(rho):
        raise ValueError("density operator is not Hermitian")
    if abs(np.trace(rho) - 1) > TRACE_TOL:
        raise ValueError(f"density operator has trace {np.trace(rho).real:.15g}, expected 1")
    if hermitian_eigvals(rho)[0] < -POSITIVITY_TOL:
        raise ValueError("density operator has a negative eigenvalue")
    return rho


def as_effect(w: np.ndarray) -> np.ndarray:
    """Validate and return ``w`` as a POVM effect (``0 <= w <= 1``)."""
    w = _check_finite(w)
    if not is_hermitian(w):
        raise ValueError("POVM effect is not Hermitian")
    lo, hi = hermitian_eigvals(w)
    if lo < -POSITIVITY_TOL or hi > 1 + POSITIVITY_TOL:
        raise ValueError(f"POVM effect eigenvalues ({lo:.3g}, {hi:.3g}) outside [0, 1]")
    return w


def conjugate_channel(u: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Apply the unitary channel ``rho -> u rho u^dagger``."""
    u = _check_finite(u)
    if not is_unitary(u):
        raise ValueError("conjugate_channel requires a unitary operator")
    return u @ rho @ dagger(u)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Half the trace norm of ``a - b``."""
    lo, hi = hermitian_eigvals(np.asarray(a) - np.asarray(b))
    return 0.5 * (abs(lo) + abs(hi))


def effect_distance(w: np.ndarray, v: np.ndarray) -> float:
    """Largest ``|tr((w - v) rho)|`` over states, i.e. the spectral norm of ``w - v``."""
    lo, hi = hermitian_eigvals(np.asarray(w) - np.asarray(v))
    return max(abs(lo), abs(hi))


def expectation(w: np.ndarray, rho: np.ndarray) -> float:
    """``tr(w rho)`` as a real number."""
    return float(np.real(np.trace(np.asarray(w) @ np.asarray(rho))))


@dataclass(frozen=True)
class PauliDecomposition:
    """Real coefficients of an operator in the basis ``(I, X, Y, Z)``.

    An effect is ``sum_i m_i P_i``.  A state is ``(I + r . sigma) / 2`` so its
    coefficients are ``(1, r1, r2, r3) / 2``.
    """

    m0: float
    m1: float
    m2: float
    m3: float

    @classmethod
    def from_matrix(cls, a: np.ndarray) -> "PauliDecomposition":
        a = np.asarray(a, dtype=complex)
        coeffs = [0.5 * np.real(np.trace(p @ a)) for p in PAULIS]
        return cls(*map(float, coeffs))

    def to_matrix(self) -> np.ndarray:
        return sum(c * p for c, p in zip(self.as_tuple(), PAULIS))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.m0, self.m1, self.m2, self.m3)

    def bloch_vector(self) -> np.ndarray:
        """Bloch vector ``r`` when the decomposition describes a state."""
        return np.array([self.m1, self.m2, self.m3]) / self.m0


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    return np.array([expectation(p, rho) for p in PAULIS[1:]])


def density_from_bloch(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.linalg.norm(r) > 1 + POSITIVITY_TOL:
        raise ValueError("Bloch vector longer than 1")
    return 0.5 * (IDENTITY + r[0] * PAULI_X + r[1] * PAULI_Y + r[2] * PAULI_Z)
