import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rankeffect.design import (
    AssignmentSpace,
    Experiment,
    PotentialOutcomes,
    draw_assignment,
    draw_assignments,
    enumerate_assignments,
    enumerate_treated_sets,
    realize,
)
from rankeffect.errors import (
    InvalidExperimentError,
    InvalidTreatedCountError,
    LengthMismatchError,
    NonFiniteInputError,
    TooLargeError,
)


class TestExperiment:
    def test_basic_fields(self):
        e = Experiment([5, 1, 7, 3], [1, 0, 1, 0], [[1.0], [2.0], [3.0], [4.0]])
        assert (e.n, e.m, e.p) == (4, 2, 1)
        assert e.has_covariates
        np.testing.assert_array_equal(e.treated, [True, False, True, False])

    def test_vector_covariate_becomes_column(self):
        e = Experiment([1, 2, 3], [1, 0, 0], [0.1, 0.2, 0.3])
        assert e.x.shape == (3, 1)

    def test_arrays_are_read_only_copies(self):
        y = np.array([1.0, 2.0])
        e = Experiment(y, [1, 0])
        y[0] = 99
        assert e.y[0] == 1.0
        with pytest.raises(ValueError):
            e.y[0] = 3

    @pytest.mark.parametrize("y,z,err", [
        ([1, 2], [1, 1], InvalidTreatedCountError),
        ([1, 2], [0, 0], InvalidTreatedCountError),
        ([1, 2, 3], [1, 0], LengthMismatchError),
        ([1, np.nan], [1, 0], NonFiniteInputError),
        ([1, np.inf], [1, 0], NonFiniteInputError),
        ([1, 2], [2, 0], InvalidExperimentError),
        ([1], [1], InvalidExperimentError),
    ])
    def test_invalid(self, y, z, err):
        with pytest.raises(err):
            Experiment(y, z)

    def test_bad_covariates(self):
        with pytest.raises(LengthMismatchError):
            Experiment([1, 2, 3], [1, 0, 0], np.ones((2, 1)))
        with pytest.raises(NonFiniteInputError):
            Experiment([1, 2, 3], [1, 0, 0], [1, np.nan, 2])

    def test_adjusted(self):
        e = Experiment([3.0, 1.0], [1, 0])
        np.testing.assert_array_equal(e.adjusted(2.0), [1.0, 1.0])


class TestPotentialOutcomes:
    def test_constant_effect_required(self):
        with pytest.raises(InvalidExperimentError):
            PotentialOutcomes([3, 4], [1, 1], 2.0)

    def test_from_control(self):
        po = PotentialOutcomes.from_control([1.0, 2.0], 0.5)
        np.testing.assert_array_equal(po.a, [1.5, 2.5])


class TestDrawAssignment:
    def test_n2_symmetry(self):
        rng = np.random.default_rng(1)
        freq = np.mean([draw_assignment(2, 1, rng)[0] for _ in range(10_000)])
        assert abs(freq - 0.5) < 0.02

    def test_n4_uniform_over_subsets(self):
        rng = np.random.default_rng(2)
        counts = Counter(tuple(draw_assignment(4, 2, rng)) for _ in range(100_000))
        assert len(counts) == 6
        for c in counts.values():
            assert abs(c / 100_000 - 1 / 6) < 0.02

    def test_seed_determinism(self):
        a = draw_assignment(10, 4, np.random.default_rng(5))
        b = draw_assignment(10, 4, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("m", [0, 5, -1])
    def test_invalid_m(self, m):
        with pytest.raises(InvalidTreatedCountError):
            draw_assignment(5, m, np.random.default_rng(0))

    def test_marginal_and_pair_probabilities(self):
        n, m, draws = 7, 3, 100_000
        rng = np.random.default_rng(3)
        z = np.concatenate(list(draw_assignments(n, m, draws, rng))).astype(float)
        assert np.all(z.sum(axis=1) == m)
        p1 = m / n
        se1 = math.sqrt(p1 * (1 - p1) / draws)
        assert np.all(np.abs(z.mean(axis=0) - p1) < 3 * se1 + 1e-12)
        p2 = m * (m - 1) / (n * (n - 1))
        se2 = math.sqrt(p2 * (1 - p2) / draws)
        pair = (z.T @ z) / draws
        off = pair[~np.eye(n, dtype=bool)]
        # 42 pairs tested; allow the usual 3-sigma band with a little slack for multiplicity
        assert np.all(np.abs(off - p2) < 4 * se2)

    def test_fisher_yates_marginals(self):
        n, m = 6, 2
        rng = np.random.default_rng(4)
        z = np.array([draw_assignment(n, m, rng) for _ in range(30_000)])
        se = math.sqrt((m / n) * (1 - m / n) / 30_000)
        assert np.all(np.abs(z.mean(axis=0) - m / n) < 4 * se)


class TestEnumeration:
    def test_n3_m1(self):
        got = [list(z) for z in enumerate_assignments(3, 1)]
        assert got == [[1, 0, 0], [0, 1, 0], [0, 0, 1]]

    def test_n4_m2_unique(self):
        got = {tuple(z) for z in enumerate_assignments(4, 2)}
        assert len(got) == 6

    def test_too_large(self):
        with pytest.raises(TooLargeError):
            enumerate_assignments(30, 15)
        with pytest.raises(TooLargeError):
            AssignmentSpace(30, 15, "exact")

    def test_chunks_cover_everything(self):
        idx = np.concatenate(list(enumerate_treated_sets(9, 4, chunk=17)))
        assert idx.shape == (math.comb(9, 4), 4)
        assert len({tuple(r) for r in idx}) == math.comb(9, 4)

    def test_space_auto(self):
        assert AssignmentSpace.auto(10, 5).mode == "exact"
        assert AssignmentSpace.auto(40, 20, seed=1).mode == "monte-carlo"
        assert AssignmentSpace(10, 5).size == 252


class TestRealize:
    def test_examples(self):
        po = PotentialOutcomes([3, 3], [1, 1], 2.0)
        np.testing.assert_array_equal(realize(po, [1, 0]).y, [3, 1])
        po = PotentialOutcomes([5, 4, 3], [3, 2, 1], 2.0)
        np.testing.assert_array_equal(realize(po, [0, 1, 0]).y, [3, 4, 1])

    def test_null_effect(self):
        b = np.array([1.0, 5.0, 2.0])
        po = PotentialOutcomes(b, b, 0.0)
        for z in enumerate_assignments(3, 1):
            np.testing.assert_array_equal(realize(po, z).y, b)

    def test_length_mismatch(self):
        po = PotentialOutcomes([1, 2], [1, 2], 0.0)
        with pytest.raises(LengthMismatchError):
            realize(po, [1, 0, 0])

    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=12),
           st.floats(-100, 100), st.floats(-1e3, 1e3), st.data())
    def test_shift_equivariance(self, b, tau, c, data):
        b = np.array(b)
        n = len(b)
        m = data.draw(st.integers(1, n - 1))
        z = np.zeros(n, dtype=int)
        z[:m] = 1
        y1 = realize(PotentialOutcomes.from_control(b, tau), z).y
        y2 = realize(PotentialOutcomes.from_control(b + c, tau), z).y
        np.testing.assert_allclose(y2, y1 + c, atol=1e-9 * (1 + np.abs(y1).max() + abs(c)))
