"""Robust phase estimation: schedule, principal-range unwrapping and Monte Carlo.

Generation ``j`` runs the ``k_j = 2^(j-1)`` experiments with ``M_j`` shots per
flavor, turns the counts into a raw phase for ``k_j A`` and selects the
representative of ``phi_j / k_j`` inside the window inherited from the
previous generation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .bounds import (
    ADDITIVE_THRESHOLD,
    oversample_factor,
    p_max_bound,
    resource_count,
    variance_bound_from_shots,
)
from .experiments import (
    ExperimentOracle,
    OutcomeCounts,
    TranscriptRecord,
    phase_from_counts,
    stream_seed,
    tie_angle,
)
from .gates import wrap_angle

__all__ = [
    "RpeSchedule", "GenerationRecord", "RpeTrace", "EstimateReport", "unwrap", "run",
    "truncated_run", "k_star_for_budget", "oversample_factor", "simulate_phases",
    "monte_carlo", "ErrorStatistics", "error_statistics",
]

_MC_TAG = 201


def _as_fraction(x) -> Fraction:
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**6)
    return Fraction(x)


@dataclass(frozen=True)
class RpeSchedule:
    """Generation count and shot schedule ``M_j = slope (K - j) + base``.

    Attributes:
        generations: number of generations ``K``.
        slope: schedule slope, kept exact so ``5/2`` rounds as intended.
        base: schedule offset, positive.
        oversample_delta: assumed additive-error bound; shots are multiplied
            by ``F(delta, M_j)`` before rounding up.
        uniform_oversampling: use ``F(delta, M_K)`` for every generation,
            the worst-case accounting, instead of the per-generation factor.
        explicit_shots: recorded shots per generation, overriding the
            formula; used when replaying a transcript.
    """

    generations: int
    slope: Fraction = Fraction(3)
    base: Fraction = Fraction(1)
    oversample_delta: float | None = None
    uniform_oversampling: bool = False
    explicit_shots: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "slope", _as_fraction(self.slope))
        object.__setattr__(self, "base", _as_fraction(self.base))
        if int(self.generations) != self.generations or self.generations < 1:
            raise ValueError("generations must be a positive integer")
        if self.slope < 0:
            raise ValueError("slope must be non-negative")
        if self.base <= 0:
            raise ValueError("base must be positive")
        if self.oversample_delta is not None and not 0 <= self.oversample_delta < ADDITIVE_THRESHOLD:
            raise ValueError(
                f"oversample_delta={self.oversample_delta} must lie in [0, 1/sqrt(8))"
            )
        if self.explicit_shots is not None:
            shots = tuple(int(m) for m in self.explicit_shots)
            if len(shots) != self.generations or min(shots) < 1:
                raise ValueError("explicit_shots needs one positive count per generation")
            object.__setattr__(self, "explicit_shots", shots)

    def nominal(self, j: int) -> Fraction:
        return self.slope * (self.generations - j) + self.base

    def oversample(self, j: int) -> float:
        if not self.oversample_delta:
            return 1.0
        m = self.nominal(self.generations if self.uniform_oversampling else j)
        return oversample_factor(self.oversample_delta, float(m))

    def shots(self) -> list[int]:
        if self.explicit_shots is not None:
            return list(self.explicit_shots)
        out = []
        for j in range(1, self.generations + 1):
            f = self.oversample(j)
            m = self.nominal(j)
            out.append(max(1, math.ceil(m) if f == 1.0 else math.ceil(f * float(m))))
        return out

    def ks(self) -> list[int]:
        return [2 ** (j - 1) for j in range(1, self.generations + 1)]

    def resource_count(self) -> int:
        return resource_count(self.shots())

    def variance_bound(self, generations: int | None = None) -> float:
        n = self.generations if generations is None else generations
        return variance_bound_from_shots(self.shots()[:n], self.oversample_delta)

    def to_dict(self) -> dict:
        return {
            "generations": self.generations,
            "slope": str(self.slope),
            "base": str(self.base),
            "oversample_delta": self.oversample_delta,
            "uniform_oversampling": self.uniform_oversampling,
        }


def unwrap(prev_estimate: float, raw_phase: float, k: int) -> float:
    """Representative of ``raw_phase / k`` modulo ``2 pi / k`` in ``(prev - pi/k, prev + pi/k]``."""
    period = 2 * math.pi / k
    x = raw_phase / k - prev_estimate
    n = math.ceil((x - period / 2) / period)
    return prev_estimate + x - n * period


@dataclass(frozen=True)
class GenerationRecord:
    k: int
    shots: int
    counts: OutcomeCounts
    raw_phase: float
    estimate: float


@dataclass(frozen=True)
class RpeTrace:
    generations: tuple[GenerationRecord, ...]
    seed: int

    @property
    def resource_count(self) -> int:
        return resource_count([g.shots for g in self.generations])

    @property
    def a_hat(self) -> float:
        return wrap_angle(self.generations[-1].estimate)

    def to_records(self, protocol: str) -> list[TranscriptRecord]:
        return [
            TranscriptRecord(protocol, j, g.k, g.shots, g.counts.a0, g.counts.a_plus, self.seed)
            for j, g in enumerate(self.generations, start=1)
        ]


@dataclass(frozen=True)
class EstimateReport:
    """Final phase estimate with its bounds.

    Attributes:
        a_hat: estimate in ``(-pi, pi]``.
        variance_bound: analytic bound on the estimate's variance.
        sigma_t_bound: ``T * sqrt(variance_bound)``.
        admissible: every modeled additive error stayed below ``1/sqrt(8)``.
        trace: per-generation record.
    """

    a_hat: float
    variance_bound: float
    sigma_t_bound: float
    admissible: bool
    trace: RpeTrace = field(repr=False)

    @property
    def resource_count(self) -> int:
        return self.trace.resource_count

    @property
    def sigma_bound(self) -> float:
        return math.sqrt(self.variance_bound)

    def to_dict(self) -> dict:
        return {
            "a_hat": self.a_hat,
            "variance_bound": self.variance_bound,
            "sigma_t_bound": self.sigma_t_bound,
            "admissible": self.admissible,
            "resource_count": self.resource_count,
            "generations": [
                {"k": g.k, "shots": g.shots, "a0": g.counts.a0, "a_plus": g.counts.a_plus,
                 "raw_phase": g.raw_phase, "estimate": g.estimate}
                for g in self.trace.generations
            ],
        }


def _run_generations(schedule: RpeSchedule, oracle: ExperimentOracle, seed: int,
                     n: int) -> RpeTrace:
    shots = schedule.shots()
    records = []
    estimate = 0.0
    for j in range(1, n + 1):
        k = 2 ** (j - 1)
        counts = oracle(k, shots[j - 1], j, seed)
        if 2 * counts.a0 == counts.shots and 2 * counts.a_plus == counts.shots:
            raw = phase_from_counts(counts, tie_angle(seed, j))
        else:
            raw = phase_from_counts(counts)
        estimate = raw if j == 1 else unwrap(estimate, raw, k)
        records.append(GenerationRecord(k, shots[j - 1], counts, raw, estimate))
    return RpeTrace(tuple(records), seed)


def _report(schedule: RpeSchedule, trace: RpeTrace,
            additive_budget: Callable[[int], float] | None) -> EstimateReport:
    n = len(trace.generations)
    var = schedule.variance_bound(n)
    admissible = additive_budget is None or all(
        additive_budget(g.k) < ADDITIVE_THRESHOLD for g in trace.generations
    )
    return EstimateReport(trace.a_hat, var, trace.resource_count * math.sqrt(var), admissible, trace)


def run(schedule: RpeSchedule, oracle: ExperimentOracle, seed: int,
        additive_budget: Callable[[int], float] | None = None) -> EstimateReport:
    """Run every generation of ``schedule`` against ``oracle``.

    Args:
        schedule: the generation schedule.
        oracle: answers both flavors of the ``k``-th experiment.
        seed: root seed; the oracle and the tie-breaking draws derive their
            streams from it.
        additive_budget: optional modeled additive error as a function of
            ``k``, used only for the admissibility flag.
    """
    return _report(schedule, _run_generations(schedule, oracle, seed, schedule.generations),
                   additive_budget)


def truncated_run(schedule: RpeSchedule, oracle: ExperimentOracle, k_star: int, seed: int,
                  additive_budget: Callable[[int], float] | None = None) -> EstimateReport:
    """Run only the generations with ``k_j < k_star``.

    ``k_star`` must be a power of two between 2 and ``2^K``.
    """
    if k_star < 2 or k_star & (k_star - 1) or k_star > 2**schedule.generations:
        raise ValueError(f"k_star={k_star} must be a power of two in [2, 2^K]")
    n = k_star.bit_length() - 1
    return _report(schedule, _run_generations(schedule, oracle, seed, n), additive_budget)


def k_star_for_budget(budget: Callable[[int], float], generations: int,
                      threshold: float = ADDITIVE_THRESHOLD) -> int:
    """Smallest power of two ``k_star`` such that every ``k_j < k_star`` has budget below threshold.

    Generations are admitted in order and the first inadmissible one stops
    the run.  Returns ``2^generations`` when every generation is admissible.

    Raises:
        ValueError: if even ``k = 1`` is inadmissible.
    """
    n = 0
    while n < generations and budget(2**n) < threshold:
        n += 1
    if n == 0:
        raise ValueError("additive error budget exceeds 1/sqrt(8) already at k = 1")
    return 2**n


# ---------------------------------------------------------------------------
# vectorized Monte Carlo


OFFSET_PATTERNS = ("toward_half", "negative")


def simulate_phases(k: int, shots: int, a_values: np.ndarray, rng: np.random.Generator,
                    delta: float = 0.0, visibility: float = 1.0,
                    pattern: str = "toward_half") -> np.ndarray:
    """Raw phase estimates for ``k A`` over many trials, with adversarial offsets.

    Args:
        k: generation multiplier.
        shots: shots per flavor.
        a_values: true phases, one per trial.
        rng: random generator.
        delta: offset magnitude.
        visibility: fringe contrast, as left by depolarizing noise.
        pattern: ``"toward_half"`` signs each offset to pull its flavor
            towards one half, which shrinks the sensitivity statistic the
            most at every phase; ``"negative"`` uses ``-delta`` on both
            flavors, the worst constant pattern.
    """
    if pattern not in OFFSET_PATTERNS:
        raise ValueError(f"unknown offset pattern {pattern!r}")
    phase = k * np.asarray(a_values)
    c, s = np.cos(phase), np.sin(phase)
    sc, ss = (np.sign(c), np.sign(s)) if pattern == "toward_half" else (1.0, 1.0)
    p0 = np.clip((1 + visibility * c) / 2 - delta * sc, 0.0, 1.0)
    pp = np.clip((1 + visibility * s) / 2 - delta * ss, 0.0, 1.0)
    a0 = rng.binomial(shots, p0)
    ap = rng.binomial(shots, pp)
    out = np.arctan2(2 * ap / shots - 1, 2 * a0 / shots - 1)
    out = np.where(out == -np.pi, np.pi, out)
    tie = (2 * a0 == shots) & (2 * ap == shots)
    if np.any(tie):
        out = np.where(tie, np.pi - 2 * np.pi * rng.random(out.shape), out)
    return out


def monte_carlo(schedule: RpeSchedule, trials: int, seed: int, chunk: int = 0,
                delta: float = 0.0, a_values: np.ndarray | None = None,
                generations: int | None = None, gamma: float = 1.0,
                pattern: str = "toward_half") -> tuple[np.ndarray, np.ndarray]:
    """Run ``trials`` independent estimations in lockstep.

    Args:
        schedule: shot schedule.
        trials: number of trials in this chunk.
        seed: root seed.
        chunk: chunk index; distinct chunks use independent streams, so a
            sweep split across workers is reproducible.
        delta: adversarial additive offset applied at every generation.
        a_values: true phases; drawn uniformly from ``(-pi, pi]`` if omitted.
        generations: run only the first ``generations`` generations.
        gamma: depolarizing survival per gate, with ``k`` gates at generation ``k``.
        pattern: offset sign pattern, see :func:`simulate_phases`.

    Returns:
        ``(a_true, a_hat)`` arrays of length ``trials``.
    """
    rng = np.random.default_rng(stream_seed(seed, _MC_TAG, chunk))
    if a_values is None:
        a_values = np.pi - 2 * np.pi * rng.random(trials)
    a_values = np.broadcast_to(np.asarray(a_values, dtype=float), (trials,)).copy()
    shots = schedule.shots()
    n = schedule.generations if generations is None else generations
    est = np.zeros(trials)
    for j in range(1, n + 1):
        k = 2 ** (j - 1)
        raw = simulate_phases(k, shots[j - 1], a_values, rng, delta, gamma**k, pattern)
        if j == 1:
            est = raw
        else:
            period = 2 * np.pi / k
            x = raw / k - est
            est = est + x - np.ceil((x - period / 2) / period) * period
    return a_values, wrap_angle(est)


@dataclass(frozen=True)
class ErrorStatistics:
    """Spread of wrapped estimation errors.

    ``rms`` includes any bias and is the figure compared with ``sigma``
    bounds; ``std`` is the linear sample deviation and ``circular_std`` the
    circular one, ``sqrt(-2 ln R)``.
    """

    rms: float
    std: float
    circular_std: float
    max_abs: float
    trials: int


def error_statistics(a_true: np.ndarray, a_hat: np.ndarray) -> ErrorStatistics:
    err = wrap_angle(np.asarray(a_hat) - np.asarray(a_true))
    err = np.atleast_1d(err)
    resultant = abs(np.mean(np.exp(1j * err)))
    circ = math.sqrt(-2 * math.log(resultant)) if resultant > 0 else math.inf
    return ErrorStatistics(
        rms=float(np.sqrt(np.mean(err**2))),
        std=float(np.std(err, ddof=1)) if err.size > 1 else 0.0,
        circular_std=circ,
        max_abs=float(np.max(np.abs(err))),
        trials=int(err.size),
    )


def generation_error_rate(k: int, shots: int, trials: int, seed: int, delta: float = 0.0) -> tuple[float, float]:
    """Empirical one-generation error rate and its ``p_max(M)`` reference, at random phases."""
    rng = np.random.default_rng(stream_seed(seed, _MC_TAG, 10**6 + shots))
    a = np.pi - 2 * np.pi * rng.random(trials)
    phi = simulate_phases(k, shots, a, rng, delta)
    d = wrap_angle(phi - wrap_angle(k * a))
    rate = float(np.mean((d >= np.pi / 2) | (d < -np.pi / 2)))
    return rate, p_max_bound(shots)
