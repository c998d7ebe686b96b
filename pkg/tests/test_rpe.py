import math
from fractions import Fraction

import numpy as np
import pytest

from rpecal import bounds
from rpecal.experiments import OutcomeCounts, ReplayOracle, SimulatorOracle, gate_count
from rpecal.gates import GateParams, wrap_angle
from rpecal.noise import NoiseModel, depolarizing_budget
from rpecal.rpe import (
    RpeSchedule,
    error_statistics,
    generation_error_rate,
    k_star_for_budget,
    monte_carlo,
    run,
    truncated_run,
    unwrap,
)


class RoundingOracle:
    """Counts equal to the exact expected counts, rounded; no sampling noise."""

    def __init__(self, a):
        self.a = a

    def __call__(self, k, shots, generation, seed):
        p0 = (1 + math.cos(k * self.a)) / 2
        pp = (1 + math.sin(k * self.a)) / 2
        return OutcomeCounts(round(shots * p0), round(shots * pp), shots)


def test_unwrap_examples():
    assert unwrap(0.0, math.pi, 2) == pytest.approx(math.pi / 2)
    assert unwrap(1.0, 0.0, 4) == pytest.approx(math.pi / 2)
    assert unwrap(-3.0, 0.0, 2) == pytest.approx(-math.pi)


def test_unwrap_window_is_half_open():
    for prev in np.linspace(-3, 3, 13):
        for k in (2, 4, 8, 64):
            for raw in np.linspace(-math.pi, math.pi, 17):
                out = unwrap(prev, raw, k)
                assert prev - math.pi / k < out <= prev + math.pi / k + 1e-12
                assert wrap_angle(k * out - raw) == pytest.approx(0.0, abs=1e-9)


def test_unwrap_consistency_under_small_phase_errors(rng):
    # raw errors below pi/3 keep every unwrapped estimate within pi/(2 k_j)
    for _ in range(500):
        K = int(rng.integers(1, 12))
        a = rng.uniform(-math.pi, math.pi)
        est = 0.0
        for j in range(1, K + 1):
            k = 2 ** (j - 1)
            raw = wrap_angle(k * a + rng.uniform(-1, 1) * (math.pi / 3 - 1e-9))
            est = raw if j == 1 else unwrap(est, raw, k)
            assert abs(wrap_angle(k * (est - a))) < math.pi / 2
        assert abs(wrap_angle(est - a)) <= bounds.xi_bar(K) + 1e-12


def test_raw_errors_below_half_pi_do_not_protect_the_branch():
    # The no-failure condition is on the unwrapped estimates: raw phases each
    # within pi/2 of k_j A can still push the second estimate onto a wrong branch.
    a = 0.0
    est = 1.5
    est = unwrap(est, -1.5, 2)
    assert est == pytest.approx(-0.75 + math.pi)
    assert abs(est - a) > bounds.xi_bar(2)


def test_schedule_shots_integer_and_fractional():
    assert RpeSchedule(4).shots() == [10, 7, 4, 1]
    sched = RpeSchedule(3, Fraction(5, 2), Fraction(1, 2))
    assert sched.shots() == [6, 3, 1]
    assert RpeSchedule(3, "5/2", "1/2").shots() == [6, 3, 1]
    assert sched.ks() == [1, 2, 4]


def test_schedule_resource_count():
    for K in range(1, 15):
        s = RpeSchedule(K)
        assert s.resource_count() == 2 * sum(2 ** (j - 1) * m for j, m in enumerate(s.shots(), start=1))
        assert s.resource_count() < 2 ** (K + 1) * 4


def test_schedule_validation():
    with pytest.raises(ValueError):
        RpeSchedule(0)
    with pytest.raises(ValueError):
        RpeSchedule(3, base=0)
    with pytest.raises(ValueError):
        RpeSchedule(3, oversample_delta=0.36)
    with pytest.raises(ValueError):
        RpeSchedule(3, explicit_shots=(1, 2))


def test_oversampling_per_generation_and_uniform():
    delta = 0.1
    per = RpeSchedule(5, oversample_delta=delta)
    uni = RpeSchedule(5, oversample_delta=delta, uniform_oversampling=True)
    nominal = RpeSchedule(5).shots()
    fk = bounds.oversample_factor(delta, 1)
    assert uni.shots() == [math.ceil(fk * m) for m in nominal]
    assert per.shots() == [math.ceil(bounds.oversample_factor(delta, m) * m) for m in nominal]
    assert all(a <= b for a, b in zip(per.shots(), uni.shots()))
    assert per.shots()[-1] == uni.shots()[-1]


def test_zero_phase_with_exact_counts_is_exact():
    sched = RpeSchedule(8, slope=2, base=2)
    assert all(m % 2 == 0 for m in sched.shots())
    report = run(sched, RoundingOracle(0.0), seed=1)
    assert report.a_hat == 0.0


def test_rounding_oracle_recovers_phase():
    for a in (0.3, -2.9, 1.234, math.pi):
        report = run(RpeSchedule(10), RoundingOracle(a), seed=0)
        assert abs(wrap_angle(report.a_hat - a)) <= bounds.xi_bar(10)


def test_report_bounds_are_consistent():
    sched = RpeSchedule(6)
    report = run(sched, SimulatorOracle("alpha", GateParams(alpha=0.02)), seed=3)
    assert report.variance_bound == pytest.approx(sched.variance_bound())
    assert report.sigma_t_bound == pytest.approx(report.resource_count * math.sqrt(report.variance_bound))
    assert report.resource_count == sched.resource_count()
    assert report.admissible
    assert -math.pi < report.a_hat <= math.pi
    assert [g.k for g in report.trace.generations] == [1, 2, 4, 8, 16, 32]


def test_replay_reproduces_report():
    sched = RpeSchedule(7)
    oracle = SimulatorOracle("epsilon", GateParams(epsilon=0.01, theta=0.02))
    first = run(sched, oracle, seed=42)
    records = first.trace.to_records("epsilon")
    again = run(sched, ReplayOracle(records), seed=42)
    assert again == first
    assert again.to_dict() == first.to_dict()


def test_run_is_deterministic_for_a_seed():
    sched = RpeSchedule(6)
    oracle = SimulatorOracle("alpha", GateParams(alpha=0.1))
    assert run(sched, oracle, 5).to_dict() == run(sched, oracle, 5).to_dict()


def test_truncated_run_full_and_single():
    sched = RpeSchedule(6)
    oracle = SimulatorOracle("alpha", GateParams(alpha=0.02))
    assert truncated_run(sched, oracle, 2**6, seed=4) == run(sched, oracle, seed=4)
    single = truncated_run(sched, oracle, 2, seed=4)
    assert len(single.trace.generations) == 1
    m1 = sched.shots()[0]
    pm = bounds.p_max_bound(m1)
    assert single.variance_bound == pytest.approx((1 - pm) * bounds.xi_bar(1) ** 2 + bounds.xi(1) ** 2 * pm)
    for bad in (1, 3, 2**7):
        with pytest.raises(ValueError):
            truncated_run(sched, oracle, bad, seed=4)


def test_k_star_under_depolarizing():
    def budget(k):
        return depolarizing_budget(0.99, gate_count("epsilon", "cos", k))

    k_star = k_star_for_budget(budget, 12)
    assert k_star >= 64
    assert k_star == 128
    assert budget(k_star // 2) < bounds.ADDITIVE_THRESHOLD <= budget(k_star)
    assert k_star_for_budget(lambda k: 0.0, 5) == 32
    with pytest.raises(ValueError):
        k_star_for_budget(lambda k: 0.5, 5)


def test_admissibility_flag():
    sched = RpeSchedule(4)
    oracle = SimulatorOracle("alpha", GateParams())
    assert not run(sched, oracle, 1, additive_budget=lambda k: 0.1 * k).admissible
    assert run(sched, oracle, 1, additive_budget=lambda k: 0.01 * k).admissible


def test_monte_carlo_chunks_are_reproducible_and_independent():
    sched = RpeSchedule(5)
    a1, e1 = monte_carlo(sched, 50, seed=9, chunk=0)
    a2, e2 = monte_carlo(sched, 50, seed=9, chunk=0)
    a3, _ = monte_carlo(sched, 50, seed=9, chunk=1)
    assert np.array_equal(a1, a2) and np.array_equal(e1, e2)
    assert not np.array_equal(a1, a3)


@pytest.mark.parametrize("slope,base,limit", [(3, 1, 12.4), (Fraction(5, 2), Fraction(1, 2), 10.7)])
def test_monte_carlo_heisenberg_constant(slope, base, limit):
    sched = RpeSchedule(8, slope, base)
    a, est = monte_carlo(sched, 2000, seed=17)
    stats = error_statistics(a, est)
    sigma_t = stats.rms * sched.resource_count()
    assert sigma_t <= limit * math.pi
    assert sigma_t >= bounds.cramer_rao_sigma_t(float(slope), float(base))


@pytest.mark.parametrize("m", [4, 7, 10])
def test_generation_error_rate_with_oversampling(m):
    delta = 0.2
    shots = math.ceil(bounds.oversample_factor(delta, m) * m)
    trials = 10_000
    rate, _ = generation_error_rate(4, shots, trials, seed=3, delta=delta)
    pm = bounds.p_max_bound(m)
    assert rate <= pm + 3 * math.sqrt(pm * (1 - pm) / trials)


def test_error_statistics():
    a = np.zeros(4)
    est = np.array([0.1, -0.1, 0.1, -0.1])
    stats = error_statistics(a, est)
    assert stats.rms == pytest.approx(0.1)
    assert stats.max_abs == pytest.approx(0.1)
    assert stats.circular_std == pytest.approx(math.sqrt(-2 * math.log(math.cos(0.1))))
    # errors straddling the branch cut are wrapped before any statistic
    wrapped = error_statistics(np.array([math.pi - 0.05]), np.array([-math.pi + 0.05]))
    assert wrapped.rms == pytest.approx(0.1)
