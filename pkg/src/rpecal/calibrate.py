"""The three calibration protocols and the staged calibration of a gate-set.

Each protocol runs robust phase estimation on a family of experiments whose
phase is a known function of one systematic error:

- alpha from ``A = -pi/2 (1 + alpha)`` on ``Z`` sequences,
- epsilon from ``A = phi (1 + epsilon)`` on ``X`` sequences,
- theta from the composite rotation angle ``Phi``, whose sign follows theta.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .bounds import (
    ADDITIVE_THRESHOLD,
    InitialBound,
    initial_bound_eps_theta,
)
from .experiments import (
    SimulatorOracle,
    TranscriptRecord,
    derive_seed,
    gate_count,
    stream_seed,
    tie_angle,
)
from .gates import GateParams, composite_axis_angle, gate_power, wrap_angle, x_gate
from .linalg2 import ket
from .noise import NoiseModel, depolarizing_budget, z_error_budget
from .rpe import EstimateReport, RpeSchedule, k_star_for_budget, run, truncated_run

TILT_EPSILON_LIMIT = 0.341
NONLINEAR_PHASE = 1.0
MIN_BOOTSTRAP_RESAMPLES = 100

_STAGE_TAGS = {"alpha": 11, "correction": 12, "initial_bound": 13, "epsilon": 14, "theta": 15}


class StageRefused(ValueError):
    """A calibration stage declined to run because its assumptions fail."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def _nearest_branch(value: float, period: float) -> float:
    return value - period * round(value / period)


def alpha_from_phase(a: float) -> float:
    """Invert ``A = -pi/2 (1 + alpha)`` on the branch nearest zero."""
    return _nearest_branch(-2 * a / math.pi - 1, 4.0)


def epsilon_from_phase(a: float, phi: float) -> float:
    """Invert ``A = phi (1 + epsilon)`` on the branch nearest zero."""
    return _nearest_branch(a / phi - 1, 2 * math.pi / phi)


def theta_from_phase(big_phi: float, epsilon_hat: float, t: int = 1) -> float:
    """Small-tilt recovery ``sin(Phi/2) / (2 cos(pi t epsilon / 2))``."""
    return math.sin(big_phi / 2) / (2 * math.cos(math.pi * t * epsilon_hat / 2))


def theta_exact_inverse(big_phi: float, epsilon_hat: float, t: int = 1) -> float:
    """Exact inverse of the composite angle, ``arcsin(sin(Phi/4) / cos(pi t epsilon / 2))``."""
    c = math.cos(math.pi * t * epsilon_hat / 2)
    return math.asin(max(-1.0, min(1.0, math.sin(big_phi / 4) / c)))


def theta_sensitivities(big_phi: float, epsilon_hat: float, t: int = 1) -> tuple[float, float]:
    """``(d theta / d Phi, d theta / d epsilon)`` of the exact inverse.

    ``d theta / d Phi`` is never below the small-angle value ``1/(4 cos(pi t epsilon/2))``.
    """
    c = math.cos(math.pi * t * epsilon_hat / 2)
    s = math.sin(big_phi / 4)
    u = s / c
    if abs(u) >= 1:
        return math.inf, math.inf
    root = math.sqrt(1 - u * u)
    d_phi = math.cos(big_phi / 4) / (4 * c * root)
    d_eps = u * math.tan(math.pi * t * epsilon_hat / 2) * (math.pi * t / 2) / root
    return d_phi, d_eps


@dataclass(frozen=True)
class ParameterEstimate:
    """One calibrated parameter with the phase estimate behind it."""

    value: float
    variance_bound: float
    report: EstimateReport = field(repr=False)
    oversample_delta: float
    k_star: int | None = None
    notes: tuple[str, ...] = ()

    @property
    def sigma_bound(self) -> float:
        return math.sqrt(self.variance_bound)

    @property
    def resource_count(self) -> int:
        return self.report.resource_count


def _with_delta(schedule: RpeSchedule, delta: float) -> RpeSchedule:
    current = schedule.oversample_delta or 0.0
    delta = max(current, delta)
    return RpeSchedule(schedule.generations, schedule.slope, schedule.base,
                       delta if delta > 0 else None, schedule.uniform_oversampling)


def _run_maybe_truncated(schedule, oracle, seed, budget, stage):
    if budget is None:
        return run(schedule, oracle, seed), None
    try:
        k_star = k_star_for_budget(budget, schedule.generations)
    except ValueError as exc:
        raise StageRefused(stage, str(exc)) from None
    if k_star == 2**schedule.generations:
        return run(schedule, oracle, seed, budget), None
    return truncated_run(schedule, oracle, k_star, seed, budget), k_star


def estimate_alpha(schedule: RpeSchedule, oracle, seed: int, budget=None) -> ParameterEstimate:
    """Estimate the Z over-rotation ``alpha``.

    Args:
        schedule: RPE schedule.
        oracle: alpha-protocol experiment oracle.
        seed: root seed.
        budget: optional additive error as a function of ``k``.  Generations
            at or above ``1/sqrt(8)`` are cut off.

    Returns:
        ``alpha_hat`` with variance bound ``(2/pi)^2 var(A_hat)``.
    """
    report, k_star = _run_maybe_truncated(schedule, oracle, seed, budget, "alpha")
    var = (2 / math.pi) ** 2 * report.variance_bound
    return ParameterEstimate(alpha_from_phase(report.a_hat), var, report,
                             schedule.oversample_delta or 0.0, k_star)


def estimate_epsilon(schedule: RpeSchedule, oracle, phi: float, seed: int,
                     theta_bound: float, extra_delta: float = 0.0, budget=None) -> ParameterEstimate:
    """Estimate the X over-rotation ``epsilon`` given a bound on ``|theta|``.

    The tilt leaks into the experiments as an additive error of at most
    ``sin^2(theta_bound)``, which joins ``extra_delta`` in the oversampling
    policy.

    Raises:
        StageRefused: if ``sin^2(theta_bound) + extra_delta >= 1/sqrt(8)``.
    """
    residual = math.sin(theta_bound) ** 2
    delta = residual + extra_delta
    if delta >= ADDITIVE_THRESHOLD:
        raise StageRefused(
            "epsilon",
            f"tilt bound |theta| <= {theta_bound:.4g} gives additive error "
            f"sin^2(theta) + other = {delta:.4g}, not below 1/sqrt(8) = {ADDITIVE_THRESHOLD:.4g} "
            "(|theta| must stay below about 36 degrees)",
        )
    schedule = _with_delta(schedule, delta)
    report, k_star = _run_maybe_truncated(schedule, oracle, seed, budget, "epsilon")
    var = report.variance_bound / phi**2
    return ParameterEstimate(epsilon_from_phase(report.a_hat, phi), var, report,
                             schedule.oversample_delta or 0.0, k_star)


@dataclass(frozen=True)
class ThetaEstimate(ParameterEstimate):
    big_phi_hat: float = 0.0
    theta_exact: float = 0.0
    bootstrap_required: bool = False


def composite_residual(epsilon_bound: float, theta_bound: float, t: int = 1) -> float:
    """Additive error ``sin^2(Theta)`` from the tilt of the composite rotation axis."""
    if abs(t * epsilon_bound) >= 1:
        return 1.0
    return math.sin(composite_axis_angle(epsilon_bound, theta_bound, t).tilt) ** 2


def estimate_theta(schedule: RpeSchedule, oracle, epsilon_hat: float, q: int, t: int,
                   seed: int, epsilon_sigma: float = 0.0, theta_bound: float = 0.0,
                   extra_delta: float = 0.0, budget=None,
                   epsilon_bound: float | None = None) -> ThetaEstimate:
    """Estimate the axis tilt ``theta`` from the composite rotation.

    Args:
        schedule: RPE schedule.
        oracle: composite-protocol experiment oracle.
        epsilon_hat: previous estimate of ``epsilon``.
        q: X gates per half of the composite rotation.
        t: odd integer with ``q phi = t pi``.
        seed: root seed.
        epsilon_sigma: uncertainty of ``epsilon_hat``, added in quadrature
            through ``d theta / d epsilon``.
        theta_bound: prior bound on ``|theta|`` for the axis-tilt residual.
        extra_delta: other additive errors (SPAM).
        budget: optional additive error as a function of ``k``.
        epsilon_bound: bound on ``|epsilon|`` for the axis-tilt residual;
            defaults to ``|epsilon_hat| + 3 epsilon_sigma``.

    Raises:
        StageRefused: if ``|t epsilon_hat| >= 0.341``.
    """
    if t < 1 or t % 2 == 0:
        raise ValueError("t must be a positive odd integer")
    if abs(t * epsilon_hat) >= TILT_EPSILON_LIMIT:
        raise StageRefused(
            "theta",
            f"|t epsilon_hat| = {abs(t * epsilon_hat):.4g} is not below {TILT_EPSILON_LIMIT}; "
            "the composite axis may tilt too far from X",
        )
    residual = composite_residual(epsilon_bound if epsilon_bound is not None
                                  else abs(epsilon_hat) + 3 * epsilon_sigma, theta_bound, t)
    delta = residual + extra_delta
    if delta >= ADDITIVE_THRESHOLD:
        raise StageRefused("theta", f"composite axis residual {delta:.4g} is not below 1/sqrt(8)")
    schedule = _with_delta(schedule, delta)
    report, k_star = _run_maybe_truncated(schedule, oracle, seed, budget, "theta")
    big_phi = report.a_hat
    d_phi, d_eps = theta_sensitivities(big_phi, epsilon_hat, t)
    var = d_phi**2 * report.variance_bound + d_eps**2 * epsilon_sigma**2
    notes = ["epsilon_hat enters as a point estimate; its uncertainty is propagated to first order",
             "the composite phase carries the sign of theta, fixed by the matrix-level oracle"]
    nonlinear = abs(big_phi) > NONLINEAR_PHASE
    if nonlinear:
        notes.append("|Phi_hat| > 1: linear propagation unreliable, use the bootstrap variance")
    return ThetaEstimate(
        value=theta_from_phase(big_phi, epsilon_hat, t),
        variance_bound=var,
        report=report,
        oversample_delta=schedule.oversample_delta or 0.0,
        k_star=k_star,
        notes=tuple(notes),
        big_phi_hat=big_phi,
        theta_exact=theta_exact_inverse(big_phi, epsilon_hat, t),
        bootstrap_required=nonlinear,
    )


def bootstrap_theta_variance(transcript: Sequence[TranscriptRecord], resamples: int, seed: int,
                             epsilon_hat: float, t: int = 1) -> float:
    """Nonparametric bootstrap variance of ``theta_hat`` from a composite-protocol transcript.

    Each resample redraws every generation's counts from the observed
    frequencies (equivalent to resampling the shots with replacement), then
    repeats the unwrapping and the theta map.
    """
    if resamples < MIN_BOOTSTRAP_RESAMPLES:
        raise ValueError(f"need at least {MIN_BOOTSTRAP_RESAMPLES} bootstrap resamples, got {resamples}")
    records = sorted(transcript, key=lambda r: r.generation)
    if not records:
        raise ValueError("empty transcript")
    rng = np.random.default_rng(stream_seed(seed, 301))
    est = np.zeros(resamples)
    for j, rec in enumerate(records, start=1):
        m = rec.shots
        a0 = rng.binomial(m, rec.a0 / m, resamples)
        ap = rng.binomial(m, rec.a_plus / m, resamples)
        raw = np.arctan2(2 * ap / m - 1, 2 * a0 / m - 1)
        raw = np.where(raw == -np.pi, np.pi, raw)
        tie = (2 * a0 == m) & (2 * ap == m)
        if np.any(tie):
            draws = np.array([tie_angle(seed, j, b + 1) for b in range(resamples)])
            raw = np.where(tie, draws, raw)
        if j == 1:
            est = raw
        else:
            period = 2 * np.pi / rec.k
            x = raw / rec.k - est
            est = est + x - np.ceil((x - period / 2) / period) * period
    big_phi = wrap_angle(est)
    c = math.cos(math.pi * t * epsilon_hat / 2)
    theta = np.sin(np.asarray(big_phi) / 2) / (2 * c)
    # shift by one draw so identical resamples give exactly zero
    return float(np.var(theta - theta[0], ddof=1))


@dataclass(frozen=True)
class CalibrationSchedules:
    alpha: RpeSchedule
    epsilon: RpeSchedule
    theta: RpeSchedule

    @classmethod
    def uniform(cls, schedule: RpeSchedule) -> "CalibrationSchedules":
        return cls(schedule, schedule, schedule)


@dataclass(frozen=True)
class CalibrationResult:
    """Outcome of a staged calibration, serializable to JSON."""

    alpha_hat: float
    epsilon_hat: float
    theta_hat: float
    alpha_variance_bound: float
    epsilon_variance_bound: float
    theta_variance_bound: float
    resource_counts: dict[str, int]
    theta_admissible_for_epsilon: bool
    t_epsilon_admissible: bool
    bootstrap_required: bool
    residual_alpha: float
    initial_bound: dict[str, float]
    k_star: dict[str, int | None]
    diagnostics: dict[str, Any]
    stages: dict[str, Any]
    provenance: dict[str, Any]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def sample_initial_bound(params: GateParams, q: int, t: int, seed: int, shots: int = 10_000,
                         mu: float = 0.02) -> InitialBound:
    """Simulate the return-probability experiment and bound ``|theta|`` and ``|epsilon|``."""
    xq = gate_power(x_gate(params.phi, params.epsilon, params.theta), q)
    q0 = float(abs(ket("0").conj() @ xq @ ket("0")) ** 2)
    rng = np.random.default_rng(stream_seed(seed, 302))
    q0_hat = rng.binomial(shots, q0) / shots
    return initial_bound_eps_theta(q0_hat, mu, shots, t)


def full_calibration(schedules: CalibrationSchedules | RpeSchedule, noise: NoiseModel | None,
                     true_params: GateParams, seed: int, q: int = 4, t: int = 1,
                     initial_shots: int = 10_000, initial_mu: float = 0.02) -> CalibrationResult:
    """Calibrate ``alpha``, then ``epsilon``, then ``theta`` on a simulated gate-set.

    After the alpha stage the Z gate is corrected to a residual drawn
    uniformly from ``+-sigma(alpha_hat)``.  SPAM errors and the intrinsic
    residual of each protocol set the oversampling; depolarizing noise is
    handled by truncating each run at its admissible ``k*``.

    Raises:
        StageRefused: tagged with the stage that declined to run.
    """
    if isinstance(schedules, RpeSchedule):
        schedules = CalibrationSchedules.uniform(schedules)
    noise = noise if noise is not None else NoiseModel.ideal()
    spam = noise.spam_budget()
    if spam >= ADDITIVE_THRESHOLD:
        raise StageRefused("alpha", f"SPAM budget {spam:.4g} is not below 1/sqrt(8)")

    def budget_for(protocol: str, static: float):
        if noise.gamma >= 1.0:
            return None
        # the sin flavor uses the longer preparation; take the worse of the two
        return lambda k: static + max(
            depolarizing_budget(noise.gamma, gate_count(protocol, f, k, q, noise.derived_preps))
            for f in ("cos", "sin")
        )

    seeds = {name: derive_seed(seed, tag) for name, tag in _STAGE_TAGS.items()}

    # alpha
    alpha_oracle = SimulatorOracle("alpha", true_params, noise, q)
    alpha_est = estimate_alpha(_with_delta(schedules.alpha, spam), alpha_oracle, seeds["alpha"],
                               budget_for("alpha", spam))

    # simulated correction of the Z gate
    rng = np.random.default_rng(stream_seed(seeds["correction"], 0))
    residual_alpha = float(rng.uniform(-1, 1) * alpha_est.sigma_bound)
    corrected = GateParams(residual_alpha, true_params.epsilon, true_params.theta, true_params.phi)

    # initial bound on epsilon and theta
    init = sample_initial_bound(corrected, q, t, seeds["initial_bound"], initial_shots, initial_mu)
    theta_ok = math.sin(init.theta_max) ** 2 + spam < ADDITIVE_THRESHOLD

    # epsilon
    eps_oracle = SimulatorOracle("epsilon", corrected, noise, q)
    eps_residual = math.sin(init.theta_max) ** 2
    eps_est = estimate_epsilon(schedules.epsilon, eps_oracle, corrected.phi, seeds["epsilon"],
                               init.theta_max, spam, budget_for("epsilon", spam + eps_residual))

    # theta
    t_eps_ok = abs(t * eps_est.value) < TILT_EPSILON_LIMIT
    theta_oracle = SimulatorOracle("theta_composite", corrected, noise, q)
    eps_bound = min(init.epsilon_max, abs(eps_est.value) + 3 * eps_est.sigma_bound)
    comp_residual = composite_residual(eps_bound, init.theta_max, t)
    theta_est = estimate_theta(schedules.theta, theta_oracle, eps_est.value, q, t, seeds["theta"],
                               eps_est.sigma_bound, init.theta_max, spam,
                               budget_for("theta_composite", spam + comp_residual), eps_bound)

    max_k_theta = theta_est.report.trace.generations[-1].k
    diagnostics = {
        "spam_budget": spam,
        "epsilon_stage_residual": eps_residual,
        "theta_stage_residual": comp_residual,
        "z_error_budget_theta_stage": z_error_budget(residual_alpha, max_k_theta),
        "theta_exact_inverse": theta_est.theta_exact,
        "big_phi_hat": theta_est.big_phi_hat,
        "theta_notes": list(theta_est.notes),
    }
    stages = {
        "alpha": _stage_dict(alpha_est),
        "epsilon": _stage_dict(eps_est),
        "theta": _stage_dict(theta_est),
    }
    return CalibrationResult(
        alpha_hat=alpha_est.value,
        epsilon_hat=eps_est.value,
        theta_hat=theta_est.value,
        alpha_variance_bound=alpha_est.variance_bound,
        epsilon_variance_bound=eps_est.variance_bound,
        theta_variance_bound=theta_est.variance_bound,
        resource_counts={"alpha": alpha_est.resource_count, "epsilon": eps_est.resource_count,
                         "theta": theta_est.resource_count},
        theta_admissible_for_epsilon=theta_ok,
        t_epsilon_admissible=t_eps_ok,
        bootstrap_required=theta_est.bootstrap_required,
        residual_alpha=residual_alpha,
        initial_bound=init._asdict(),
        k_star={"alpha": alpha_est.k_star, "epsilon": eps_est.k_star, "theta": theta_est.k_star},
        diagnostics=diagnostics,
        stages=stages,
        provenance={
            "seed": int(seed),
            "q": q,
            "t": t,
            "schedules": {name: getattr(schedules, name).to_dict() for name in ("alpha", "epsilon", "theta")},
            "true_params": asdict(true_params),
            "noise": _noise_summary(noise),
        },
    )


def _stage_dict(est: ParameterEstimate) -> dict:
    out = {"value": est.value, "variance_bound": est.variance_bound, "seed": est.report.trace.seed,
           "oversample_delta": est.oversample_delta, "k_star": est.k_star}
    out.update(est.report.to_dict())
    return out


def _noise_summary(noise: NoiseModel) -> Mapping[str, Any]:
    return {
        "gamma": noise.gamma,
        "derived_preps": noise.derived_preps,
        "prep_errors": {k: noise.prep_error(k) for k in sorted(noise.preps)},
        "meas_errors": {k: noise.meas_error(k) for k in sorted(noise.effects)},
        "raw_offsets": [[p, f, k, v] for (p, f, k), v in sorted(noise.raw_offsets.items())],
    }


def stage_transcript(stage: Mapping[str, Any], protocol: str) -> list[TranscriptRecord]:
    """Transcript records of one stage of a serialized calibration result."""
    return [
        TranscriptRecord(protocol, j, g["k"], g["shots"], g["a0"], g["a_plus"], stage["seed"])
        for j, g in enumerate(stage["generations"], start=1)
    ]
