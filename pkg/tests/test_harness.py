import math

import numpy as np
import pytest

from coalbm.harness import (McSummary, binomial_ci_half, convergence_test,
                            coupling_discrepancy, ks_2sample,
                            ks_2sample_critical, ks_distance, median_summary,
                            monotone_decreasing_within_ci, run_replicates,
                            summarize, tail_fit)
from coalbm.rng import RngStream


class TestSummarize:
    def test_ci_formula(self):
        x = np.arange(1, 101, dtype=float)
        s = summarize(x)
        assert s.mean == pytest.approx(50.5)
        assert s.ci_half == pytest.approx(1.96 * math.sqrt(x.var(ddof=1) / 100))
        assert s.covers(50.5)
        assert not s.covers(0.0)

    def test_infinite_samples_do_not_count(self):
        s = summarize([1.0, 2.0, math.inf, 3.0], dropped=1)
        assert s.count == 3 and s.dropped == 1

    def test_too_few_rejected(self):
        with pytest.raises(ValueError):
            summarize([1.0])


class TestMedianSummary:
    def test_gaussian_coverage(self):
        # order-statistic interval covers the true median ~95% of the time
        hits = 0
        for r in range(200):
            x = RngStream(310, r).generator.standard_normal(2000)
            med, half = median_summary(x)
            hits += abs(med - 0.0) <= half
        assert hits / 200 > 0.9

    def test_robust_to_heavy_tails(self):
        gen = RngStream(311, 0).generator
        x = gen.random(5000) ** -2.0  # survival x**-1/2: median is 4
        med, half = median_summary(x)
        assert med == pytest.approx(4.0, rel=0.15)
        assert half < med  # the interval stays at the body's scale

    def test_too_few_rejected(self):
        with pytest.raises(ValueError):
            median_summary(np.arange(5.0))


def _cube(seed, r):
    return (seed + r) ** 3


class TestRunReplicates:
    def test_stream_id_order(self):
        out = run_replicates(_cube, 10, 5)
        assert out == [(10 + r) ** 3 for r in range(5)]

    def test_worker_count_invariance(self):
        a = run_replicates(_cube, 3, 17, workers=1)
        b = run_replicates(_cube, 3, 17, workers=2)
        assert a == b

    def test_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            run_replicates(_cube, 1, 0)
        with pytest.raises(ValueError):
            run_replicates(_cube, 1, 5, workers=0)


class TestKsDistance:
    def test_single_sample_at_median(self):
        assert ks_distance([0.0], lambda t: 0.5) == pytest.approx(0.5)

    def test_inverse_transform_samples_are_close(self):
        gen = RngStream(301, 0).generator
        u = gen.random(20_000)
        # exponential via inverse CDF
        x = -np.log1p(-u)
        d = ks_distance(x, lambda t: 1.0 - math.exp(-t))
        assert d < 1.36 / math.sqrt(x.size) * 1.5

    def test_shifted_distribution_detected(self):
        gen = RngStream(302, 0).generator
        x = -np.log1p(-gen.random(5000)) + 0.5  # shifted right by 0.5
        d = ks_distance(x, lambda t: 1.0 - math.exp(-t))
        assert d > 0.3  # mass below 0.5 is missing entirely

    def test_censored_samples_stay_in_denominator(self):
        x = [0.1, 0.2, math.inf, math.inf]
        d = ks_distance(x, lambda t: float(t >= 0.0) * 0.5)
        assert d == pytest.approx(0.5)  # CDF 0.5 vs empirical 0.25 then 0.5 at 0.2... sup at first point
        # sup |i/n - F|: i/n in {0.25, 0.5}; F = 0.5 -> sup = 0.25 at x1 left limit 0.5
        assert 0 <= d <= 1

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ks_distance([], lambda t: 0.5)


class TestKs2Sample:
    def test_identical_samples(self):
        x = np.arange(10.0)
        assert ks_2sample(x, x) == 0.0

    def test_disjoint_samples(self):
        assert ks_2sample([1.0, 2.0], [5.0, 6.0]) == 1.0

    def test_critical_value_scale(self):
        # alpha = 0.05 at equal sizes: c(alpha) ~ 1.36
        assert ks_2sample_critical(1000, 1000, 0.05) == \
            pytest.approx(1.358 * math.sqrt(2 / 1000), rel=1e-3)


class TestTailFit:
    def test_recovers_known_power_law(self):
        # inverse-CDF samples with survival t**-1.5
        gen = RngStream(303, 0).generator
        u = gen.random(100_000)
        x = u ** (-1.0 / 1.5)
        fit = tail_fit(x, window=(0.9, 0.999))
        assert abs(fit.exponent - 1.5) < 2.0 * fit.stderr + 0.02

    def test_pair_law_gives_half(self):
        # survival (d/sqrt(2t))-style: exponent 1/2
        gen = RngStream(304, 0).generator
        u = gen.random(100_000)
        x = u ** -2.0  # survival x**-0.5
        fit = tail_fit(x, window=(0.9, 0.999))
        assert abs(fit.exponent - 0.5) < 2.0 * fit.stderr + 0.01

    def test_degenerate_input_rejected(self):
        with pytest.raises(ValueError):
            tail_fit(np.ones(20_000))

    def test_too_few_samples_rejected(self):
        with pytest.raises(ValueError):
            tail_fit(np.arange(1, 100.0))

    def test_censored_window_rejected(self):
        x = np.concatenate([np.arange(1.0, 9000.0), np.full(1000, np.inf)])
        with pytest.raises(ValueError):
            tail_fit(x, window=(0.9, 0.995))


class TestConvergence:
    def test_constant_samples(self):
        out = convergence_test({10: np.ones(500)}, eps=0.3)
        assert out[10][0] == 0.0

    def test_huge_eps(self):
        gen = RngStream(305, 0).generator
        out = convergence_test({10: 1 + gen.standard_normal(500)}, eps=1e9)
        assert out[10][0] == 0.0

    def test_monotone_in_eps(self):
        gen = RngStream(306, 0).generator
        x = {50: 1 + 0.5 * gen.standard_normal(2000)}
        f1 = convergence_test(x, 0.2)[50][0]
        f2 = convergence_test(x, 0.4)[50][0]
        assert f2 <= f1

    def test_monotone_checker(self):
        good = {50: (0.5, 0.02), 100: (0.4, 0.02), 200: (0.3, 0.02)}
        assert monotone_decreasing_within_ci(good)
        bad = {50: (0.3, 0.02), 100: (0.45, 0.02), 200: (0.2, 0.02)}
        assert not monotone_decreasing_within_ci(bad)
        noisy = {50: (0.40, 0.03), 100: (0.41, 0.03), 200: (0.30, 0.03)}
        assert monotone_decreasing_within_ci(noisy)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            convergence_test({10: np.array([])}, eps=0.3)


class TestCoupling:
    def test_whole_system_never_disagrees(self):
        # epsilon large enough that the subsystem is the whole system
        res = coupling_discrepancy(20, 10, 0.6, 1, count=40, master_seed=307)
        assert res.frequency == 0.0
        assert res.undetermined == 0

    def test_circle_needs_interior_center(self):
        with pytest.raises(ValueError):
            coupling_discrepancy(100, 2, 0.01, 1, count=5, master_seed=308,
                                 topology="circle")
