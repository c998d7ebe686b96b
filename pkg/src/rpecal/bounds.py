"""Closed-form error bounds for robust phase estimation and their exact checks.

The per-generation error probability is computed exactly by enumerating both
binomial outcomes, and compared with the analytic ``p_max`` bounds.  The
variance and ``sigma T`` constants of the full schedule, the Fisher
information floor and the initial-bounding procedures for ``(epsilon,
theta)`` and for a faulty measurement effect live here as well.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Protocol, Sequence

import numpy as np
from scipy.special import gammaln
from scipy.stats import binom

from .linalg2 import PauliDecomposition

ADDITIVE_THRESHOLD = 1 / math.sqrt(8)
MAX_ENUMERATION_SHOTS = 2000

# tolerance for the one-sided error event; the boundary +-pi/2 is hit exactly
# by lattice points and atan2 rounding would otherwise decide their side
_EDGE_TOL = 1e-9

LITERATURE_FLOORS = {
    "known_principal_range": 1.0,
    "entangled_probes": math.pi,
}


class ScheduleLike(Protocol):
    generations: int
    oversample_delta: float | None

    def shots(self) -> list[int]: ...


# ---------------------------------------------------------------------------
# exact enumeration


def _check_shots(m: int) -> int:
    if int(m) != m or m < 1:
        raise ValueError(f"shot count must be a positive integer, got {m}")
    if m > MAX_ENUMERATION_SHOTS:
        raise ValueError(f"exact enumeration refused for M={m} > {MAX_ENUMERATION_SHOTS}")
    return int(m)


def _outcome_angles(m: int) -> np.ndarray:
    """``atan2(y, x)`` for every ``(a0, a_plus)`` lattice point; rows index ``a0``."""
    x = 2 * np.arange(m + 1) / m - 1
    return np.arctan2(x[None, :], x[:, None])


def _error_mask(angles: np.ndarray, varphi: float, m: int) -> np.ndarray:
    d = np.pi - np.mod(np.pi - (angles - varphi), 2 * np.pi)
    err = ((d >= np.pi / 2 - _EDGE_TOL) | (d < -np.pi / 2 - _EDGE_TOL)).astype(float)
    if m % 2 == 0:
        # the random tie angle errs with probability exactly 1/2
        err[m // 2, m // 2] = 0.5
    return err


def _success_probabilities(varphi, delta0, delta_plus):
    p0 = (1 + np.cos(varphi)) / 2 + delta0
    pp = (1 + np.sin(varphi)) / 2 + delta_plus
    return p0, pp


def _enumerate(varphi: float, m: int, p0: float, pp: float, angles: np.ndarray) -> float:
    a = np.arange(m + 1)
    logw = binom.logpmf(a, m, p0)[:, None] + binom.logpmf(a, m, pp)[None, :]
    terms = np.exp(logw) * _error_mask(angles, varphi, m)
    return float(np.sum(np.sort(terms, axis=None)))


def exact_p_error(varphi: float, m: int, delta0: float = 0.0, delta_plus: float = 0.0) -> float:
    """Probability that one generation's phase estimate errs by half a period.

    Enumerates every ``(a0, a_plus)`` outcome of ``m`` cos- and ``m``
    sin-flavor shots with success probabilities ``(1 + cos varphi)/2 +
    delta0`` and ``(1 + sin varphi)/2 + delta_plus``.  The error event is
    ``wrap(phi_hat - varphi) >= pi/2`` or ``< -pi/2``; the tie point counts
    one half.

    Args:
        varphi: the true phase.
        m: shots per flavor, at most 2000.
        delta0: additive offset on the cos-flavor probability.
        delta_plus: additive offset on the sin-flavor probability.

    Returns:
        The exact error probability.

    Raises:
        ValueError: if ``m`` is infeasible or an offset pushes a probability
            outside [0, 1].
    """
    m = _check_shots(m)
    p0, pp = _success_probabilities(varphi, delta0, delta_plus)
    if not (0.0 <= p0 <= 1.0 and 0.0 <= pp <= 1.0):
        raise ValueError(f"offsets give probabilities ({p0:.6g}, {pp:.6g}) outside [0, 1]")
    return _enumerate(varphi, m, float(p0), float(pp), _outcome_angles(m))


def p_error_curve(phis: Sequence[float], m: int, delta0: float = 0.0, delta_plus: float = 0.0,
                  clamp: bool = False) -> np.ndarray:
    """:func:`exact_p_error` over many phases at once.

    With ``clamp=True`` probabilities pushed outside [0, 1] by the offsets are
    clamped back.  The clamped instance has offsets no larger in magnitude,
    so it is still covered by the same ``delta`` bound.
    """
    m = _check_shots(m)
    phis = np.asarray(phis, dtype=float)
    p0, pp = _success_probabilities(phis, delta0, delta_plus)
    if clamp:
        p0, pp = np.clip(p0, 0.0, 1.0), np.clip(pp, 0.0, 1.0)
    elif np.any((p0 < 0) | (p0 > 1) | (pp < 0) | (pp > 1)):
        raise ValueError("offsets give probabilities outside [0, 1] on part of the grid")
    angles = _outcome_angles(m)
    a = np.arange(m + 1)
    out = np.empty(len(phis))
    # bound the working set to a few million cells per block
    block = max(1, 4_000_000 // (m + 1) ** 2)
    for start in range(0, len(phis), block):
        sl = slice(start, start + block)
        lw0 = binom.logpmf(a[None, :], m, p0[sl, None])
        lwp = binom.logpmf(a[None, :], m, pp[sl, None])
        w = np.exp(lw0[:, :, None] + lwp[:, None, :])
        d = np.pi - np.mod(np.pi - (angles[None] - phis[sl, None, None]), 2 * np.pi)
        err = ((d >= np.pi / 2 - _EDGE_TOL) | (d < -np.pi / 2 - _EDGE_TOL)).astype(float)
        if m % 2 == 0:
            err[:, m // 2, m // 2] = 0.5
        terms = (w * err).reshape(w.shape[0], -1)
        out[sl] = np.sum(np.sort(terms, axis=1), axis=1)
    return out


def h_function(m: int, z: float) -> float:
    """``H(M, z) = sum_x (M!)^2 z^x / ((M-x)! (M+x)!)`` for ``0 <= z``."""
    x = np.arange(m + 1)
    logc = 2 * gammaln(m + 1) - gammaln(m - x + 1) - gammaln(m + x + 1)
    with np.errstate(divide="ignore"):
        terms = np.exp(logc + x * np.log(z)) if z > 0 else (x == 0).astype(float)
    return float(np.sum(np.sort(terms)))


def p_error_pi4_closed_form(m: int, delta: float = 0.0) -> float:
    """Error probability at ``varphi = pi/4`` with both offsets at ``-delta``, via ``H``."""
    p = (2 + math.sqrt(2)) / 4 - delta
    log_pref = m * math.log(p * (1 - p)) + gammaln(2 * m + 1) - 2 * gammaln(m + 1)
    return float(math.exp(log_pref) * (h_function(m, (1 - p) / p) - 0.5))


# ---------------------------------------------------------------------------
# analytic bounds


def p_max_bound(m: float) -> float:
    """``1 / (sqrt(2 pi M) 2^M)``."""
    if m <= 0:
        raise ValueError("M must be positive")
    return 1 / (math.sqrt(2 * math.pi * m) * 2.0**m)


def _check_delta(delta: float) -> float:
    if not 0.0 <= delta < ADDITIVE_THRESHOLD:
        raise ValueError(
            f"additive error bound {delta} must lie in [0, 1/sqrt(8)); beyond it no number "
            "of samples bounds the error probability"
        )
    return delta


def p_max_bound_delta(m: float, delta: float) -> float:
    """Error-probability bound under additive offsets of magnitude at most ``delta``."""
    _check_delta(delta)
    if m <= 0:
        raise ValueError("M must be positive")
    if delta == 0.0:
        # same value; avoids a last-bit difference from the general expression
        return p_max_bound(m)
    g = 1 - math.sqrt(8) * delta
    return (1 - 0.5 * g * g) ** m / (math.sqrt(2 * math.pi) * g * math.sqrt(m))


def oversample_factor(delta: float, m: float) -> float:
    """Shot multiplier ``F(delta, M)`` restoring the offset-free bound ``p_max(M)``."""
    _check_delta(delta)
    if m <= 0:
        raise ValueError("M must be positive")
    if delta == 0.0:
        return 1.0
    g = 1 - math.sqrt(8) * delta
    return (math.log(0.5) + math.log(g) / m) / math.log(1 - 0.5 * g * g)


def xi(h: int) -> float:
    """Largest error when the first principal-range failure is at generation ``h``."""
    return 2 * math.pi / 2.0**h


def xi_bar(k: int) -> float:
    """Largest error after ``K`` generations with no principal-range failure."""
    return 2 * math.pi / 2.0 ** (k + 1)


def _p_max_for(shots: int, delta: float | None) -> float:
    return p_max_bound(shots) if not delta else p_max_bound_delta(shots, delta)


def variance_bound_from_shots(shots: Sequence[int], delta: float | None = None) -> float:
    """Variance bound for generations using ``shots[j-1]`` shots per flavor.

    Args:
        shots: shots per flavor of generations ``1..K``.
        delta: additive-error bound.  When given, the offset-aware
            ``p_max(M, delta)`` is used for every generation.
    """
    k = len(shots)
    if k == 0:
        raise ValueError("at least one generation is required")
    pm = [_p_max_for(s, delta) for s in shots]
    total = (1 - pm[-1]) * xi_bar(k) ** 2
    total += math.fsum(xi(j) ** 2 * pm[j - 1] for j in range(1, k + 1))
    return total


def variance_bound(schedule: ScheduleLike) -> float:
    """Upper bound on the variance of the final estimate of ``schedule``."""
    return variance_bound_from_shots(schedule.shots(), schedule.oversample_delta)


def resource_count(shots: Sequence[int]) -> int:
    """``T = 2 sum_j 2^(j-1) M_j``."""
    return 2 * sum(2 ** (j - 1) * s for j, s in enumerate(shots, start=1))


def nominal_shots(slope: float, base: float, generations: int) -> list[int]:
    return [max(1, math.ceil(slope * (generations - j) + base)) for j in range(1, generations + 1)]


class SigmaTConstants(NamedTuple):
    upper: float
    cramer_rao_lower: float


def sigma_t_upper(slope: float, base: float) -> float:
    """Closed-form ``sigma T`` constant valid for every ``K``; requires ``slope > 2``."""
    if slope <= 2:
        raise ValueError(
            f"slope={slope}: the closed-form constant needs slope > 2, otherwise the error "
            "sum grows faster than 4^-K and Heisenberg scaling is lost"
        )
    return 2 * math.pi * (slope + base) * math.sqrt(
        1 + p_max_bound(base) * (3 + 16 / (2.0**slope - 4))
    )


def cramer_rao_sigma_t(slope: float, base: float) -> float:
    """Asymptotic Cramer-Rao floor ``(a + b) sqrt(18 / (a + 3b))`` on ``sigma T``."""
    return (slope + base) * math.sqrt(18 / (slope + 3 * base))


def sigma_t_constants(slope: float, base: float) -> SigmaTConstants:
    return SigmaTConstants(sigma_t_upper(slope, base), cramer_rao_sigma_t(slope, base))


def refined_sigma_t(slope: float, base: float, generations: int) -> float:
    """Tail-splitting bound on ``sigma T`` for one ``K``, minimized over the split.

    The last ``z + 1`` generations of the error sum are kept exactly.  Earlier
    generations use ``p_max(M_j) <= 1/(sqrt(2 pi M_{K-z}) 2^(slope (K-j) + base))``
    and are summed as a geometric series.  ``T`` is the exact count with
    ceiling-rounded shots.
    """
    k = generations
    shots = nominal_shots(slope, base, k)
    t = resource_count(shots)
    ratio = 2.0**slope / 4
    best = math.inf
    for z in range(k):
        head = (1 - p_max_bound(shots[-1])) * xi_bar(k) ** 2
        head += math.fsum(xi(j) ** 2 * p_max_bound(shots[j - 1]) for j in range(k - z, k + 1))
        n = k - z - 1
        if n > 0:
            geo = n if ratio == 1 else ratio * (ratio**n - 1) / (ratio - 1)
            tail = (4 * math.pi**2 / math.sqrt(2 * math.pi * shots[k - z - 1])
                    * 2.0 ** (-slope * k - base) * geo)
        else:
            tail = 0.0
        best = min(best, math.sqrt(head + tail) * t)
    return best


def fisher_information(shots: Sequence[int]) -> float:
    """``sum_j 2 M_j k_j^2``: each of the ``2 M_j`` shots carries ``k_j^2``."""
    return float(sum(2 * s * 4 ** (j - 1) for j, s in enumerate(shots, start=1)))


def fisher_asymptote(slope: float, base: float, generations: int) -> float:
    return 2 / 9 * 4.0**generations * (slope + 3 * base)


# ---------------------------------------------------------------------------
# sensitivity statistic


def r_statistic_moments(varphi: float, m: int, delta0: float = 0.0,
                        delta_plus: float = 0.0) -> tuple[float, float]:
    """Mean and variance of ``r = (x, y) . (cos varphi, sin varphi)`` with ``x = 2 a0/M - 1``."""
    c, s = math.cos(varphi), math.sin(varphi)
    mean = 1 + 2 * (delta0 * c + delta_plus * s)
    var = (1 - c * c * (c + 2 * delta0) ** 2 - s * s * (s + 2 * delta_plus) ** 2) / m
    return mean, var


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class PErrorGrid:
    """Exact error probabilities over a phase grid next to the analytic bound."""

    m: int
    delta: float
    phis: np.ndarray
    exact: np.ndarray
    bound: float

    @property
    def dominated(self) -> bool:
        return bool(np.all(self.exact <= self.bound))

    @property
    def worst_ratio(self) -> float:
        return float(np.max(self.exact) / self.bound)

    @property
    def argmax_phi(self) -> float:
        return float(self.phis[int(np.argmax(self.exact))])


def phase_grid(n: int = 720) -> np.ndarray:
    """``n`` uniform points in ``(-pi, pi]`` plus the candidates ``pi/4 + q pi/2``."""
    grid = np.pi - 2 * np.pi * np.arange(n) / n
    candidates = np.pi / 4 + np.pi / 2 * np.arange(-2, 2)
    return np.unique(np.concatenate([grid, candidates]))


def p_error_grid(m: int, delta: float = 0.0, delta0: float | None = None,
                 delta_plus: float | None = None, phis: np.ndarray | None = None) -> PErrorGrid:
    """Evaluate the exact error probability on a grid against its bound.

    Offsets default to the worst case ``-delta`` on both flavors and are
    clamped where they would leave [0, 1].
    """
    phis = phase_grid() if phis is None else np.asarray(phis, dtype=float)
    d0 = -delta if delta0 is None else delta0
    dp = -delta if delta_plus is None else delta_plus
    exact = p_error_curve(phis, m, d0, dp, clamp=True)
    bound = p_max_bound(m) if delta == 0 else p_max_bound_delta(m, delta)
    return PErrorGrid(m, delta, phis, exact, bound)


# ---------------------------------------------------------------------------
# initial bounds on epsilon, theta and a measurement effect


def q0_probability(epsilon: float, theta: float, t: int = 1) -> float:
    """Probability of returning to ``|0>`` after ``q`` X gates with ``q phi = t pi``."""
    return math.sin(theta) ** 2 + math.cos(theta) ** 2 * math.sin(t * math.pi * epsilon / 2) ** 2


class InitialBound(NamedTuple):
    theta_max: float
    epsilon_max: float
    confidence: float


def hoeffding_confidence(shots: int, mu: float) -> float:
    return 1 - math.exp(-2 * shots * mu * mu)


def initial_bound_eps_theta(q0_hat: float, mu: float, shots: int, t: int = 1) -> InitialBound:
    """Bounds on ``|theta|`` and ``|epsilon|`` from an estimate of the return probability.

    Args:
        q0_hat: observed frequency of ``|0>`` after the ``t pi`` rotation.
        mu: Hoeffding slack added to ``q0_hat``.
        shots: number of observations ``V`` behind ``q0_hat``.
        t: odd integer with ``q phi = t pi``.

    Returns:
        ``(theta_max, epsilon_max, confidence)``; both bounds hold together
        with probability at least ``confidence``.
    """
    if not 0.0 <= q0_hat <= 1.0:
        raise ValueError("q0_hat must lie in [0, 1]")
    if mu <= 0:
        raise ValueError("mu must be positive")
    if shots < 1:
        raise ValueError("at least one observation is needed")
    if t < 1 or t % 2 == 0:
        raise ValueError("t must be a positive odd integer")
    root = math.asin(math.sqrt(min(1.0, q0_hat + mu)))
    return InitialBound(root, 2 * root / (t * math.pi), hoeffding_confidence(shots, mu))


@dataclass(frozen=True)
class MeasBoundInput:
    """Observed frequencies of ``tr(W |0><0|)`` and ``tr(W rho)`` for ``rho`` near ``|1>``."""

    g0_hat: float
    g1_hat: float
    mu: float
    shots: int

    def __post_init__(self):
        if not (0.0 <= self.g0_hat <= 1.0 and 0.0 <= self.g1_hat <= 1.0):
            raise ValueError("observed frequencies must lie in [0, 1]")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.shots < 1:
            raise ValueError("at least one observation is needed")

    @property
    def g0_minus(self) -> float:
        return self.g0_hat - self.mu

    @property
    def g1_plus(self) -> float:
        return self.g1_hat + self.mu


def measurement_bound_terms(g0_minus: float, g1_plus: float) -> tuple[float, float]:
    """``(Delta_1, Delta_2)`` for the measurement-effect bound."""
    a, b = g0_minus, g1_plus
    d1 = (a * a - b * b - 3 * a - 2 * a * b - b + 2) / (2 * (a - b))
    d2 = 2 * (1 - a)
    return d1, d2


def measurement_bound_from_limits(g0_minus: float, g1_plus: float) -> float:
    if not (0.0 <= g1_plus < g0_minus <= 1.0):
        raise ValueError(
            f"need 0 <= G1+ < G0- <= 1, got G0-={g0_minus:.6g}, G1+={g1_plus:.6g}; "
            "the bound is only derived for a nearly ideal effect"
        )
    d1, d2 = measurement_bound_terms(g0_minus, g1_plus)
    return d1 + math.sqrt(d1 * d1 + d2 * d2 / 2)


def measurement_effect_bound(inp: MeasBoundInput) -> tuple[float, float]:
    """Claimed bound on ``max_rho |tr((W - |0><0|) rho)|`` and its confidence.

    The Hoeffding-shifted limits ``G0- = g0_hat - mu`` and ``G1+ = g1_hat +
    mu`` must satisfy ``0 <= G1+ < G0- <= 1``.  See the project notes for the
    regime in which this bound has been found not to hold.
    """
    bound = measurement_bound_from_limits(inp.g0_minus, inp.g1_plus)
    return bound, 1 - 2 * math.exp(-2 * inp.shots * inp.mu**2)


def _m12_condition_holds(w: np.ndarray, g0_minus: float) -> bool:
    """Check ``|m1|, |m2| <= 1 - G0-`` for the Pauli coefficients of effect ``w``."""
    d = PauliDecomposition.from_matrix(w)
    slack = 1 - g0_minus
    return abs(d.m1) <= slack + 1e-12 and abs(d.m2) <= slack + 1e-12
