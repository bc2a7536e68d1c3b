"""Randomization tests, test-inversion intervals and the local-shift rank identity.

Under the sharp null ``tau = tau0`` the adjusted responses ``b = y - tau0 z``
are fixed, so every supported statistic is an affine function of the sum of
fixed unit scores over the treated set:

* ``wrs``: scores are ranks of ``b``;
* ``adjusted-wrs``: scores are ranks of the residuals of ``b`` on ``[1, x]``;
* ``diff-in-means``: scores are ``b`` itself, mapped to ``tau0 + mean_T - mean_C``.

The null distribution is therefore a distribution of subset sums.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .design import AssignmentSpace, Experiment, draw_assignments, enumerate_treated_sets
from .errors import MissingCovariatesError, NoCoverageError
from .estimators import diff_in_means
from .ols import Residualizer
from .ranks import UP, rank

__all__ = [
    "NullDistribution", "LocalShiftIndicator", "STATISTICS", "null_distribution",
    "observed_statistic", "p_value", "test_inversion_ci", "decomposition_check",
]

STATISTICS = ("wrs", "diff-in-means", "adjusted-wrs")
_ALIASES = {"dm": "diff-in-means", "rank": "wrs", "adj": "adjusted-wrs", "rank_adj": "adjusted-wrs"}


@dataclass(frozen=True)
class NullDistribution:
    """Sorted statistic values, one per assignment, all equally weighted."""

    values: np.ndarray
    mode: str
    draws: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float))
        if v.size == 0:
            raise ValueError("null distribution is empty")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return int(self.values.size)

    @property
    def mean(self):
        return float(self.values.mean())

    @property
    def var(self):
        return float(self.values.var())


@dataclass(frozen=True)
class LocalShiftIndicator:
    """Signed indicator of a difference falling in the window between 0 and ``h / sqrt(n)``.

    For ``h >= 0`` returns ``1{0 <= x < w}``; for ``h < 0`` returns
    ``-1{w <= x < 0}``, with ``w = h / sqrt(n)``.
    """

    h: float
    n: int

    @property
    def width(self) -> float:
        return self.h / math.sqrt(self.n)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        w = self.width
        if self.h >= 0:
            return ((x >= 0) & (x < w)).astype(float)
        return -((x >= w) & (x < 0)).astype(float)


def _stat_name(stat):
    stat = _ALIASES.get(stat, stat)
    if stat not in STATISTICS:
        raise ValueError(f"unknown statistic {stat!r}; choose from {STATISTICS}")
    return stat


def _scores(exp, tau0, stat, policy):
    """Unit scores and the affine map from treated score sums to statistic values."""
    b = exp.adjusted(tau0)
    n, m = exp.n, exp.m
    if stat == "wrs":
        return rank(b, policy).ranks, lambda s: s
    if stat == "adjusted-wrs":
        if not exp.has_covariates:
            raise MissingCovariatesError("adjusted rank-sum needs covariates")
        return rank(Residualizer(exp.x).residuals(b), policy).ranks, lambda s: s
    total = float(b.sum())
    return b, lambda s: tau0 + s / m - (total - s) / (n - m)


def _treated_sums(scores, space: AssignmentSpace):
    n, m = space.n, space.m
    if space.mode == "exact":
        parts = [scores[idx].sum(axis=1) for idx in enumerate_treated_sets(n, m, space.cap)]
    else:
        rng = np.random.default_rng(space.seed)
        parts = [block @ scores for block in draw_assignments(n, m, space.draws, rng)]
    return np.concatenate(parts)


def observed_statistic(exp: Experiment, tau0: float = 0.0, stat: str = "wrs", policy=UP) -> float:
    """Observed value of ``stat`` at ``tau0``, on the same scale as :func:`null_distribution`."""
    scores, f = _scores(exp, tau0, _stat_name(stat), policy)
    return float(f(scores[exp.treated].sum()))


def null_distribution(exp: Experiment, tau0: float = 0.0, stat: str = "wrs",
                      space: Optional[AssignmentSpace] = None, policy=UP) -> NullDistribution:
    """Randomization distribution of ``stat`` under the sharp null ``tau = tau0``.

    Adjusted responses ``y - tau0 z`` are held fixed and the assignment is
    re-drawn from ``space`` (exact enumeration or seeded Monte Carlo).
    """
    stat = _stat_name(stat)
    space = space or AssignmentSpace.auto(exp.n, exp.m)
    if (space.n, space.m) != (exp.n, exp.m):
        raise ValueError("assignment space does not match the experiment")
    scores, f = _scores(exp, tau0, stat, policy)
    values = f(_treated_sums(scores, space))
    if space.mode == "exact":
        return NullDistribution(values, "exact")
    return NullDistribution(values, "monte-carlo", space.draws, space.seed)


def _tail_probs(values, observed):
    # sorted values; ties counted inclusively on both sides, with a hair of
    # slack so floating-point noise in affine maps does not split a tie
    scale = max(1.0, float(np.max(np.abs(values))), abs(observed))
    tol = 1e-10 * scale
    n = values.size
    le = np.searchsorted(values, observed + tol, side="right") / n
    ge = (n - np.searchsorted(values, observed - tol, side="left")) / n
    return le, ge


def p_value(dist: NullDistribution, observed: float, sided: str = "two") -> float:
    """Randomization p-value with inclusive tie counting.

    ``left`` is ``P(T <= obs)``, ``right`` is ``P(T >= obs)`` and ``two`` is
    twice the smaller of the two, capped at 1.
    """
    le, ge = _tail_probs(dist.values, observed)
    if sided == "left":
        return float(le)
    if sided == "right":
        return float(ge)
    if sided == "two":
        return float(min(1.0, 2.0 * min(le, ge)))
    raise ValueError(f"sided must be 'two', 'left' or 'right', got {sided!r}")


class _Inverter:
    """Evaluates p-values over many hypothesized effects with one fixed set of assignments."""

    def __init__(self, exp, stat, space, policy):
        self.exp, self.stat, self.policy = exp, stat, policy
        n, m = exp.n, exp.m
        if space.mode == "exact":
            blocks = list(enumerate_treated_sets(n, m, space.cap))
            idx = np.concatenate(blocks)
            mat = np.zeros((idx.shape[0], n))
            np.put_along_axis(mat, idx, 1.0, axis=1)
        else:
            rng = np.random.default_rng(space.seed)
            mat = np.concatenate(list(draw_assignments(n, m, space.draws, rng))).astype(float)
        self.assignments = mat

    def p(self, tau0):
        scores, f = _scores(self.exp, tau0, self.stat, self.policy)
        values = np.sort(f(self.assignments @ scores))
        obs = f(scores[self.exp.treated].sum())
        le, ge = _tail_probs(values, obs)
        return min(1.0, 2.0 * min(le, ge))


def _refine(accept, a, b, iters):
    """Bisect between rejected ``a`` and accepted ``b``; returns the accepted end."""
    for _ in range(iters):
        mid = 0.5 * (a + b)
        if accept(mid):
            b = mid
        else:
            a = mid
    return b


def test_inversion_ci(exp: Experiment, stat: str = "wrs", space: Optional[AssignmentSpace] = None,
                      level: float = 0.95, grid=None, policy=UP, refine_iter: int = 30):
    """Confidence interval ``(lo, hi)`` by inverting two-sided randomization tests.

    ``grid`` is either an array of candidate effects or ``None`` for 513
    points spanning the difference in means plus or minus six Neyman standard
    errors. Monte Carlo draws are shared across all candidates. The extreme
    accepted grid points are refined by bisection against their rejected
    neighbours.
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    stat = _stat_name(stat)
    space = space or AssignmentSpace.auto(exp.n, exp.m, seed=0)
    inv = _Inverter(exp, stat, space, policy)
    alpha = 1.0 - level
    accept = lambda t: inv.p(t) >= alpha  # noqa: E731
    if grid is None:
        dm = diff_in_means(exp)
        half = 6.0 * (dm.se if dm.se and dm.se > 0 else 1.0)
        grid = np.linspace(dm.point - half, dm.point + half, 513)
    grid = np.sort(np.asarray(grid, dtype=float))
    ok = np.array([accept(t) for t in grid])
    if not ok.any():
        raise NoCoverageError("every hypothesized effect on the grid was rejected")
    first, last = int(np.argmax(ok)), int(len(ok) - 1 - np.argmax(ok[::-1]))
    step = grid[1] - grid[0] if len(grid) > 1 else 1.0
    lo = grid[first]
    if first > 0:
        lo = _refine(accept, grid[first - 1], lo, refine_iter)
    else:
        # widen past the grid edge until a rejection is found
        a = lo - step
        for _ in range(60):
            if not accept(a):
                lo = _refine(accept, a, lo, refine_iter)
                break
            lo, step = a, step * 2
            a = lo - step
    step = grid[1] - grid[0] if len(grid) > 1 else 1.0
    hi = grid[last]
    if last < len(grid) - 1:
        hi = _refine(accept, grid[last + 1], hi, refine_iter)
    else:
        b = hi + step
        for _ in range(60):
            if not accept(b):
                hi = _refine(accept, b, hi, refine_iter)
                break
            hi, step = b, step * 2
            b = hi + step
    return float(lo), float(hi)


test_inversion_ci.__test__ = False  # keep pytest from collecting it


def _up_ranks_rows(v):
    # v: (k, n); q[r, j] = #{i : v[r, i] <= v[r, j]}
    return (v[:, None, :] <= v[:, :, None]).sum(axis=2)


def decomposition_check(b, m: int, h: float, cap: int = 200_000):
    """Exact distributions behind the local-shift rank identity.

    ``lhs`` holds the treated up-rank sums of ``b - (h / sqrt(N)) z`` over
    every assignment ``z``. ``rhs`` holds ``t0 - gamma`` where ``t0`` is the
    treated up-rank sum of ``b`` and ``gamma`` sums the local-shift indicator
    of ``b_j - b_i`` over treated ``j`` and control ``i``. Both are returned
    sorted, as integer arrays; they coincide assignment by assignment.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    ind = LocalShiftIndicator(h, n)
    delta = ind.width
    q0 = _up_ranks_rows(b[None, :])[0]
    # pair[j, i] = I(b_j - b_i), diagonal excluded
    pair = ind(b[:, None] - b[None, :])
    np.fill_diagonal(pair, 0.0)
    lhs, rhs = [], []
    for idx in enumerate_treated_sets(n, m, cap, chunk=4096):
        z = np.zeros((idx.shape[0], n))
        np.put_along_axis(z, idx, 1.0, axis=1)
        q = _up_ranks_rows(b[None, :] - delta * z)
        lhs.append((q * z).sum(axis=1))
        t0 = z @ q0
        gamma = np.einsum("kj,ji,ki->k", z, pair, 1.0 - z)
        rhs.append(t0 - gamma)
    lhs = np.sort(np.rint(np.concatenate(lhs)).astype(np.int64))
    rhs = np.sort(np.rint(np.concatenate(rhs)).astype(np.int64))
    return lhs, rhs
