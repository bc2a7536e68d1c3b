import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rankeffect.design import Experiment
from rankeffect.errors import DegenerateError, MissingCovariatesError, ZeroFunctionalError
from rankeffect.estimators import Estimate
from rankeffect.variance import (
    DensityFunctionalEstimate,
    NuConfig,
    attach_rank_ci,
    count_window_pairs,
    i_hat_control_only,
    rank_ci,
    standard_error_from_functional,
    v_hat_plugin,
    w_hat_plugin,
)

NORMAL_OVERLAP = 1 / (2 * math.sqrt(math.pi))


def brute_pairs(v, w):
    return sum(1 for a in v for b in v if 0 <= b - a < w)


def half_split(n, rng):
    z = np.zeros(n, int)
    z[rng.choice(n, n // 2, replace=False)] = 1
    return z


class TestPairCounting:
    @given(st.lists(st.integers(-20, 20), min_size=1, max_size=40),
           st.sampled_from([0.1, 0.25, 0.3, 1.0, 1 / 3, 2.0]), st.sampled_from([1, 0.1, 0.3]))
    def test_matches_double_loop_on_grids(self, ints, w, unit):
        # values on a lattice make many differences land on the window edge
        v = np.array(ints) * unit
        assert count_window_pairs(v, w) == brute_pairs(v, w)
        assert count_window_pairs(v, w, include_diagonal=False) == brute_pairs(v, w) - len(v)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40), st.floats(1e-6, 50))
    def test_matches_double_loop_random(self, v, w):
        assert count_window_pairs(v, w) == brute_pairs(v, w)


class TestIHat:
    def test_hand_example(self):
        e = Experiment([0.0, 5.0, 0.3, 9.0], [0, 1, 0, 1])
        assert i_hat_control_only(e).value == pytest.approx(0.5)

    def test_spread_controls_give_zero(self):
        e = Experiment([0.0, 1.0, 2.0, 3.0, 4.0, 5.0], [1, 0, 0, 0, 1, 0])
        assert i_hat_control_only(e).value == 0.0

    def test_needs_two_controls(self):
        with pytest.raises(DegenerateError):
            i_hat_control_only(Experiment([1.0, 2.0, 3.0], [1, 1, 0]))

    def test_normal_controls(self):
        rng = np.random.default_rng(7)
        n = 5000
        e = Experiment(rng.normal(size=n), half_split(n, rng))
        assert i_hat_control_only(e).value == pytest.approx(NORMAL_OVERLAP, rel=0.15)


class TestVHat:
    def test_diagonal_only(self):
        z = np.array([1, 0] * 50)
        e = Experiment(np.arange(100.0), z)
        est = v_hat_plugin(e, 0.0)
        assert est.value == pytest.approx(100 ** (-2 / 3), rel=1e-12)
        assert est.kind == "V-hat" and est.n_used == 100
        assert v_hat_plugin(e, 0.0, diagonal=False).value == 0.0

    def test_all_identical(self):
        e = Experiment(np.full(50, 3.0), np.array([1, 0] * 25))
        est = v_hat_plugin(e, 0.0)
        assert est.value == pytest.approx(50 ** (1 / 3))
        assert est.diagnostics["degenerate_ties"]

    def test_normal(self):
        rng = np.random.default_rng(8)
        n = 5000
        z = half_split(n, rng)
        e = Experiment(rng.normal(size=n) + 1.5 * z, z)
        assert v_hat_plugin(e, 1.5).value == pytest.approx(NORMAL_OVERLAP, rel=0.15)

    @given(st.lists(st.integers(-400, 400), min_size=4, max_size=40), st.integers(-1000, 1000))
    def test_shift_invariance_exact(self, ints, c):
        y = np.array(ints) / 8.0
        z = np.zeros(len(y), int)
        z[::2] = 1
        if z.sum() == len(z):
            z[-1] = 0
        a = v_hat_plugin(Experiment(y, z), 0.25).value
        b = v_hat_plugin(Experiment(y + c, z), 0.25).value
        assert a == b

    def test_nu_validation(self):
        for bad in (0.0, 0.5, 0.7, -0.1):
            with pytest.raises(ValueError):
                NuConfig(bad)

    def test_nu_insensitivity(self):
        n = 2000
        for seed in range(50):
            rng = np.random.default_rng(seed)
            e = Experiment(rng.normal(size=n), half_split(n, rng))
            vals = [v_hat_plugin(e, 0.0, nu).value for nu in (0.25, 1 / 3, 5 / 12)]
            assert max(vals) / min(vals) < 1.2

    def test_agrees_with_control_only(self):
        rng = np.random.default_rng(9)
        n = 2000
        e = Experiment(rng.normal(size=n), half_split(n, rng))
        assert v_hat_plugin(e, 0.0).value == pytest.approx(i_hat_control_only(e).value, rel=0.2)


class TestWHat:
    def test_intercept_only_equals_v_hat(self, rng):
        n = 300
        z = half_split(n, rng)
        e = Experiment(rng.normal(size=n), z, np.ones((n, 1)))
        assert w_hat_plugin(e, 0.1).value == v_hat_plugin(e, 0.1).value

    @pytest.mark.parametrize("sigma,target", [(1.0, NORMAL_OVERLAP), (2.0, NORMAL_OVERLAP / 2)])
    def test_gaussian_linear_model(self, sigma, target):
        rng = np.random.default_rng(10)
        n = 5000
        x = rng.uniform(-4, 4, size=(n, 2))
        z = half_split(n, rng)
        y = x @ [3.0, -1.0] + sigma * rng.normal(size=n) + 2 * z
        assert w_hat_plugin(Experiment(y, z, x), 2.0).value == pytest.approx(target, rel=0.15)

    def test_needs_covariates(self):
        with pytest.raises(MissingCovariatesError):
            w_hat_plugin(Experiment([1.0, 2.0], [1, 0]), 0.0)


class TestIntervals:
    def test_se_example(self):
        # (12 * 0.25 * 0.28209^2 * 400) ** -0.5
        assert standard_error_from_functional(0.28209, 400, 200) == pytest.approx(0.1023344, abs=1e-6)

    def test_ci_example(self):
        lo, hi = rank_ci(1.0, 0.28209, 400, 200, 0.95)
        assert hi - 1.0 == pytest.approx(0.20057, abs=1e-4)
        assert lo == pytest.approx(0.7994, abs=1e-3) and hi == pytest.approx(1.2006, abs=1e-3)

    def test_scaling(self):
        se = standard_error_from_functional(0.3, 400, 100)
        assert standard_error_from_functional(0.6, 400, 100) == pytest.approx(se / 2)
        assert standard_error_from_functional(0.3, 1600, 400) == pytest.approx(se / 2)

    def test_level_monotone(self):
        w95 = np.diff(rank_ci(0.0, 0.3, 100, 50, 0.95))[0]
        assert np.diff(rank_ci(0.0, 0.3, 100, 50, 0.9999))[0] > w95

    def test_balanced_design_shortest(self):
        widths = [np.diff(rank_ci(0.0, 0.3, 100, m, 0.95))[0] for m in range(1, 100)]
        assert int(np.argmin(widths)) + 1 == 50

    def test_zero_functional(self):
        with pytest.raises(ZeroFunctionalError):
            rank_ci(0.0, 0.0, 10, 5)
        f = DensityFunctionalEstimate(0.0, "V-hat", 10)
        est = attach_rank_ci(Estimate(1.0, method="rank"), f, 10, 5)
        assert est.ci is None and est.se is None
        assert "ci_unavailable" in est.diagnostics

    def test_attach(self):
        f = DensityFunctionalEstimate(0.28209, "V-hat", 400)
        est = attach_rank_ci(Estimate(1.0, method="rank"), f, 400, 200, 0.95)
        assert est.ci[0] == pytest.approx(0.7994, abs=1e-3)
        assert est.diagnostics["functional"] == "V-hat"

    def test_functional_validation(self):
        with pytest.raises(ValueError):
            DensityFunctionalEstimate(-1.0, "V-hat", 3)
        with pytest.raises(ValueError):
            DensityFunctionalEstimate(math.inf, "V-hat", 3)
