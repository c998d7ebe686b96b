import json
import math

import numpy as np
import pytest

from rpecal import bounds
from rpecal.calibrate import (
    CalibrationSchedules,
    StageRefused,
    alpha_from_phase,
    bootstrap_theta_variance,
    composite_residual,
    epsilon_from_phase,
    estimate_alpha,
    estimate_epsilon,
    estimate_theta,
    full_calibration,
    stage_transcript,
    theta_exact_inverse,
    theta_from_phase,
    theta_sensitivities,
)
from rpecal.experiments import SimulatorOracle, TranscriptRecord, template_phase
from rpecal.gates import GateParams, composite_axis_angle, composite_u, signed_rotation_angle, wrap_angle
from rpecal.noise import NoiseModel
from rpecal.rpe import RpeSchedule, error_statistics, monte_carlo


def signed_phi(eps, theta, t=1):
    return math.copysign(composite_axis_angle(eps, theta, t).big_phi, theta)


def test_parameter_maps_round_trip():
    for x in np.linspace(-0.2, 0.2, 41):
        a = wrap_angle(template_phase("alpha", GateParams(alpha=x)))
        assert alpha_from_phase(a) == pytest.approx(x, abs=1e-12)
        e = wrap_angle(template_phase("epsilon", GateParams(epsilon=x)))
        assert epsilon_from_phase(e, math.pi / 4) == pytest.approx(x, abs=1e-12)


def test_theta_map_cubic_remainder():
    for eps in np.linspace(-0.3, 0.3, 13):
        for th in np.linspace(-0.2, 0.2, 21):
            phi = signed_phi(eps, th)
            assert abs(theta_from_phase(phi, eps) - th) <= 2 * abs(th) ** 3 + 1e-15
            assert theta_exact_inverse(phi, eps) == pytest.approx(th, abs=1e-12)


def test_signed_phase_matches_matrix():
    for eps, th in ((0.0, 0.05), (0.1, -0.05), (-0.2, 0.15)):
        assert signed_rotation_angle(composite_u(eps, th)) == pytest.approx(signed_phi(eps, th), abs=1e-10)


def test_theta_example_without_over_rotation():
    phi = signed_phi(0.0, 0.05)
    assert phi == pytest.approx(0.2, abs=1e-12)
    est = theta_from_phase(phi, 0.0)
    assert est == pytest.approx(math.sin(0.1) / 2, abs=1e-15)
    assert est == pytest.approx(0.049917, abs=1e-6)
    assert 0.05 - est == pytest.approx(8.3e-5, abs=1e-6)


def test_theta_zero_gives_zero():
    assert theta_from_phase(signed_phi(0.1, 0.0), 0.1) == 0.0


def test_sensitivities_exceed_small_angle_value():
    for eps in (0.0, 0.05, -0.2):
        for phi in (0.01, 0.2, -0.5, 1.2):
            d_phi, d_eps = theta_sensitivities(phi, eps)
            assert d_phi >= 1 / (4 * math.cos(math.pi * eps / 2)) - 1e-15
            h = 1e-6
            fd_phi = (theta_exact_inverse(phi + h, eps) - theta_exact_inverse(phi - h, eps)) / (2 * h)
            fd_eps = (theta_exact_inverse(phi, eps + h) - theta_exact_inverse(phi, eps - h)) / (2 * h)
            assert d_phi == pytest.approx(fd_phi, rel=1e-6)
            assert d_eps == pytest.approx(fd_eps, rel=1e-5, abs=1e-9)


def test_alpha_noiseless_zero():
    K = 8
    est = estimate_alpha(RpeSchedule(K), SimulatorOracle("alpha", GateParams()), seed=2)
    assert abs(est.value) <= 2 * bounds.xi_bar(K) / math.pi
    assert est.variance_bound == pytest.approx((2 / math.pi) ** 2 * RpeSchedule(K).variance_bound())


def test_alpha_rms_within_heisenberg_constant():
    sched = RpeSchedule(10)
    a = wrap_angle(template_phase("alpha", GateParams(alpha=0.02)))
    _, est = monte_carlo(sched, 2000, seed=8, a_values=np.full(2000, a))
    alpha_hat = np.array([alpha_from_phase(x) for x in est])
    rms = float(np.sqrt(np.mean((alpha_hat - 0.02) ** 2)))
    assert rms <= (2 / math.pi) * 12.4 * math.pi / sched.resource_count()


def test_alpha_error_halves_per_generation():
    rms = []
    for K in (8, 9):
        sched = RpeSchedule(K)
        a_true, est = monte_carlo(sched, 4000, seed=21)
        rms.append(error_statistics(a_true, est).rms)
    assert 0.35 <= rms[1] / rms[0] <= 0.7


def test_epsilon_admissible_tilt_sets_oversampling():
    oracle = SimulatorOracle("epsilon", GateParams(epsilon=0.01, theta=0.3))
    est = estimate_epsilon(RpeSchedule(6), oracle, math.pi / 4, seed=1, theta_bound=0.3)
    assert est.oversample_delta == pytest.approx(math.sin(0.3) ** 2)
    assert est.oversample_delta == pytest.approx(0.0873, abs=1e-4)
    assert est.report.trace.generations[0].shots > RpeSchedule(6).shots()[0]


def test_epsilon_refuses_large_tilt():
    oracle = SimulatorOracle("epsilon", GateParams(theta=0.7))
    with pytest.raises(StageRefused, match="36 degrees") as info:
        estimate_epsilon(RpeSchedule(6), oracle, math.pi / 4, seed=1, theta_bound=0.7)
    assert info.value.stage == "epsilon"


def test_theta_refuses_large_over_rotation():
    oracle = SimulatorOracle("theta_composite", GateParams(epsilon=0.4))
    with pytest.raises(StageRefused) as info:
        estimate_theta(RpeSchedule(6), oracle, epsilon_hat=0.4, q=4, t=1, seed=1)
    assert info.value.stage == "theta"


def test_theta_estimate_and_flags():
    params = GateParams(epsilon=0.01, theta=0.05)
    oracle = SimulatorOracle("theta_composite", params)
    est = estimate_theta(RpeSchedule(9), oracle, epsilon_hat=0.01, q=4, t=1, seed=3,
                         epsilon_sigma=1e-3, theta_bound=0.1)
    assert abs(est.value - 0.05) < 3 * est.sigma_bound + 1e-4
    assert not est.bootstrap_required
    d_phi, d_eps = theta_sensitivities(est.big_phi_hat, 0.01)
    assert est.variance_bound == pytest.approx(d_phi**2 * est.report.variance_bound + d_eps**2 * 1e-6)

    big = estimate_theta(RpeSchedule(6), SimulatorOracle("theta_composite", GateParams(theta=0.4)),
                         epsilon_hat=0.0, q=4, t=1, seed=3)
    assert big.bootstrap_required
    assert any("bootstrap" in n for n in big.notes)


def test_composite_residual_grows_with_over_rotation():
    assert composite_residual(0.0, 0.1) == pytest.approx(0.0, abs=1e-30)
    assert 0 < composite_residual(0.01, 0.1) < composite_residual(0.05, 0.1)


def test_bootstrap_needs_enough_resamples():
    rec = [TranscriptRecord("theta_composite", 1, 1, 4, 4, 4, 0)]
    with pytest.raises(ValueError):
        bootstrap_theta_variance(rec, 50, seed=1, epsilon_hat=0.0)


def test_bootstrap_of_deterministic_transcript_is_zero():
    recs = [TranscriptRecord("theta_composite", j, 2 ** (j - 1), 6, 6, 0, 0) for j in range(1, 5)]
    assert bootstrap_theta_variance(recs, 200, seed=1, epsilon_hat=0.0) == 0.0


def test_bootstrap_agrees_with_monte_carlo_spread():
    params = GateParams(epsilon=0.01, theta=0.05)
    sched = RpeSchedule(5)
    oracle = SimulatorOracle("theta_composite", params)
    phis = []
    for seed in range(1000):
        est = estimate_theta(sched, oracle, 0.01, 4, 1, seed)
        phis.append(est.big_phi_hat)
    propagated = np.std(phis, ddof=1) / (4 * math.cos(math.pi * 0.01 / 2))
    first = estimate_theta(sched, oracle, 0.01, 4, 1, seed=5000)
    boot = math.sqrt(bootstrap_theta_variance(first.report.trace.to_records("theta_composite"),
                                              500, seed=5, epsilon_hat=0.01))
    assert 0.5 <= boot / propagated <= 2.0


def test_full_calibration_perfect_gates():
    K = 8
    result = full_calibration(RpeSchedule(K), None, GateParams(), seed=4)
    level = bounds.xi_bar(K)
    assert abs(result.alpha_hat) <= 4 * level
    assert abs(result.epsilon_hat) <= 4 * level
    assert abs(result.theta_hat) <= 4 * level
    assert result.theta_admissible_for_epsilon and result.t_epsilon_admissible
    assert not result.bootstrap_required
    assert result.k_star == {"alpha": None, "epsilon": None, "theta": None}


def test_full_calibration_is_deterministic():
    sched = CalibrationSchedules(RpeSchedule(6), RpeSchedule(7), RpeSchedule(6, "5/2", "1/2"))
    params = GateParams(0.02, 0.01, 0.05)
    a = full_calibration(sched, None, params, seed=11).to_json()
    b = full_calibration(sched, None, params, seed=11).to_json()
    assert a == b
    data = json.loads(a)
    assert data["provenance"]["seed"] == 11
    assert set(data["stages"]) == {"alpha", "epsilon", "theta"}


def test_stage_transcript_round_trip():
    result = full_calibration(RpeSchedule(6), None, GateParams(0.02, 0.01, 0.05), seed=3)
    recs = stage_transcript(result.stages["alpha"], "alpha")
    assert [r.k for r in recs] == [1, 2, 4, 8, 16, 32]
    assert all(r.seed == result.stages["alpha"]["seed"] for r in recs)


def test_full_calibration_refuses_large_tilt():
    with pytest.raises(StageRefused) as info:
        full_calibration(RpeSchedule(6), None, GateParams(theta=0.7), seed=1)
    assert info.value.stage == "epsilon"


def test_depolarizing_truncates_runs():
    K = 10
    result = full_calibration(RpeSchedule(K), NoiseModel(gamma=0.99), GateParams(0.02, 0.01, 0.05), seed=6)
    for name in ("alpha", "epsilon", "theta"):
        k_star = result.k_star[name]
        assert k_star is not None and k_star < 2**K
        assert result.stages[name]["generations"][-1]["k"] == k_star // 2
    assert result.k_star["alpha"] == 128


def test_theta_uncertainty_scales_with_total_resources():
    products = []
    for K in (6, 8, 10):
        r = full_calibration(RpeSchedule(K), None, GateParams(0.02, 0.01, 0.05), seed=K)
        n = sum(r.resource_counts.values())
        products.append(math.sqrt(r.theta_variance_bound) * n)
    assert max(products) / min(products) < 1.5
