import math

import numpy as np
import pytest

from rankeffect.design import AssignmentSpace, Experiment
from rankeffect.errors import NoCoverageError, TooLargeError
from rankeffect.estimators import rosenbaum_unadjusted
from rankeffect.randtest import (
    LocalShiftIndicator,
    NullDistribution,
    decomposition_check,
    null_distribution,
    observed_statistic,
    p_value,
    test_inversion_ci as inversion_ci,
)
from rankeffect.ranks import wrs_null_moments
from rankeffect.variance import rank_ci, v_hat_plugin

from helpers import random_experiment


class TestNullDistribution:
    def test_small_wrs(self):
        e = Experiment([0.3, 1.2, 2.5, 4.0], [1, 1, 0, 0])
        d = null_distribution(e, 0.0, "wrs")
        np.testing.assert_array_equal(d.values, [3, 4, 5, 5, 6, 7])
        assert d.mode == "exact" and len(d) == 6

    def test_constant_dm(self):
        e = Experiment(np.full(6, 2.0), [1, 1, 1, 0, 0, 0])
        assert np.all(null_distribution(e, 0.0, "diff-in-means").values == 0.0)

    def test_adjusted_responses_fixed(self):
        e = Experiment([5.0, 1.0, 7.0, 3.0], [1, 0, 1, 0])
        d = null_distribution(e, 4.0, "diff-in-means")
        # b = [1, 1, 3, 3]; every re-randomized contrast shifted by tau0
        assert d.mean == pytest.approx(4.0)

    def test_monte_carlo_mean(self):
        rng = np.random.default_rng(1)
        e = random_experiment(rng, 8, m=4)
        exact = null_distribution(e, 0.0, "wrs")
        mc = null_distribution(e, 0.0, "wrs", AssignmentSpace(8, 4, "monte-carlo", 100_000, seed=3))
        assert mc.mode == "monte-carlo" and len(mc) == 100_000
        assert abs(mc.mean - exact.mean) < 3 * math.sqrt(exact.var / 100_000)

    def test_monte_carlo_reproducible(self):
        e = random_experiment(np.random.default_rng(2), 30, m=15)
        space = AssignmentSpace(30, 15, "monte-carlo", 500, seed=9)
        a = null_distribution(e, 0.0, "wrs", space).values
        np.testing.assert_array_equal(a, null_distribution(e, 0.0, "wrs", space).values)

    def test_exact_moments_match_formula(self, rng):
        for n in range(2, 11):
            for m in range(1, n):
                e = random_experiment(rng, n, m=m, ties=True)
                d = null_distribution(e, 0.0, "wrs")
                assert len(d) == math.comb(n, m)
                mean, var = wrs_null_moments(e.y, m)
                assert d.mean == pytest.approx(mean, abs=1e-10)
                assert d.var == pytest.approx(var, abs=1e-10)

    def test_adjusted_wrs(self, rng):
        e = random_experiment(rng, 9, m=4, p=1)
        d = null_distribution(e, 0.5, "adjusted-wrs")
        assert d.mean == pytest.approx(4 * 10 / 2)

    def test_too_large(self):
        e = random_experiment(np.random.default_rng(0), 30, m=15)
        with pytest.raises(TooLargeError):
            null_distribution(e, 0.0, "wrs", AssignmentSpace(30, 15, "exact"))

    def test_unknown_statistic(self, rng):
        with pytest.raises(ValueError):
            null_distribution(random_experiment(rng, 5), 0.0, "median")


class TestPValue:
    dist = NullDistribution([3, 4, 5, 5, 6, 7], "exact")

    def test_right_tail(self):
        assert p_value(self.dist, 7, "right") == pytest.approx(1 / 6)

    def test_left_boundary(self):
        assert p_value(self.dist, 2.9, "left") == 0.0
        assert p_value(self.dist, 3, "left") == pytest.approx(1 / 6)

    def test_two_sided_median(self):
        assert p_value(self.dist, 5, "two") == 1.0

    def test_invalid_side(self):
        with pytest.raises(ValueError):
            p_value(self.dist, 5, "both")

    def test_monotone_in_distance(self, rng):
        for _ in range(10):
            e = random_experiment(rng, 8, m=4)
            d = null_distribution(e, 0.0, "wrs")
            med = np.median(d.values)
            obs = np.arange(10, 27)
            ps = [p_value(d, o) for o in obs]
            order = np.argsort(np.abs(obs - med), kind="stable")
            assert np.all(np.diff(np.array(ps)[order]) <= 1e-12)

    def test_monte_carlo_converges(self):
        rng = np.random.default_rng(4)
        e = random_experiment(rng, 8, m=4)
        obs = observed_statistic(e, 0.0, "wrs")
        exact = p_value(null_distribution(e, 0.0, "wrs"), obs)
        draws = 20_000
        mc = p_value(null_distribution(e, 0.0, "wrs",
                                       AssignmentSpace(8, 4, "monte-carlo", draws, seed=5)), obs)
        # two-sided p doubles a tail, so its MC error is at most twice the tail error
        assert abs(mc - exact) < 3 * 2 * math.sqrt(max(exact, 1e-3) * (1 - min(exact, 0.999)) / draws)


class TestInversion:
    def test_contains_estimate_and_nests(self):
        rng = np.random.default_rng(5)
        e = random_experiment(rng, 12, m=6)
        lo95, hi95 = inversion_ci(e, "wrs", level=0.95)
        lo99, hi99 = inversion_ci(e, "wrs", level=0.99)
        assert lo95 <= rosenbaum_unadjusted(e).point <= hi95
        assert lo99 <= lo95 and hi95 <= hi99

    def test_overlaps_analytic_interval(self):
        rng = np.random.default_rng(6)
        n = 200
        z = np.zeros(n, int)
        z[rng.choice(n, 100, replace=False)] = 1
        e = Experiment(rng.normal(size=n) + z, z)
        space = AssignmentSpace(n, 100, "monte-carlo", 4000, seed=1)
        lo, hi = inversion_ci(e, "wrs", space, 0.95)
        p = rosenbaum_unadjusted(e).point
        alo, ahi = rank_ci(p, v_hat_plugin(e, p), n, 100, 0.95)
        overlap = min(hi, ahi) - max(lo, alo)
        assert overlap >= 0.8 * min(hi - lo, ahi - alo)

    def test_no_coverage(self):
        e = random_experiment(np.random.default_rng(7), 10, m=5)
        with pytest.raises(NoCoverageError):
            inversion_ci(e, "wrs", grid=np.linspace(100, 200, 11))

    def test_expands_past_grid(self):
        e = random_experiment(np.random.default_rng(8), 10, m=5)
        narrow = inversion_ci(e, "diff-in-means", grid=np.linspace(-0.01, 0.01, 3) + e.y.mean())
        full = inversion_ci(e, "diff-in-means")
        assert narrow == pytest.approx(full, abs=1e-4)


class TestLocalShift:
    def test_indicator(self):
        ind = LocalShiftIndicator(2.0, 4)
        np.testing.assert_array_equal(ind([-0.1, 0.0, 0.5, 0.99, 1.0]), [0, 1, 1, 1, 0])
        neg = LocalShiftIndicator(-2.0, 4)
        np.testing.assert_array_equal(neg([-1.0, -0.5, 0.0, 0.5]), [-1, -1, 0, 0])

    def test_h_zero(self):
        lhs, rhs = decomposition_check([3.0, 1.0, 2.0, 5.0], 2, 0.0)
        np.testing.assert_array_equal(lhs, rhs)

    def test_distinct_example(self):
        lhs, rhs = decomposition_check([1, 2, 3, 4, 5, 6], 3, 1.0)
        assert len(lhs) == 20
        np.testing.assert_array_equal(lhs, rhs)

    def test_tie_example(self):
        lhs, rhs = decomposition_check([1, 2, 2, 4, 5, 6], 3, 2.0)
        np.testing.assert_array_equal(lhs, rhs)

    def test_shift_moves_distribution(self):
        lhs, _ = decomposition_check([1, 2, 3, 4, 5, 6], 3, 3.0)
        base, _ = decomposition_check([1, 2, 3, 4, 5, 6], 3, 0.0)
        assert lhs.sum() < base.sum()

    def test_random_configurations(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 9))
            m = int(rng.integers(1, n))
            b = np.round(rng.normal(size=n), 1)
            h = float(rng.uniform(-3, 3))
            lhs, rhs = decomposition_check(b, m, h)
            np.testing.assert_array_equal(lhs, rhs)

    def test_too_large(self):
        with pytest.raises(TooLargeError):
            decomposition_check(np.arange(40.0), 20, 1.0)
