"""Point estimators of a constant additive treatment effect.

Rank-based estimators solve "rank-sum equals its randomization mean" for the
effect. Because the rank-sum is a step function of the hypothesized effect,
the solution is taken as the midpoint of

* ``tau_star``: the supremum of effects where the rank-sum exceeds its mean,
* ``tau_star2``: the infimum of effects where it falls below its mean.

For the unadjusted statistic with up-ranks that midpoint is the median of all
treated-minus-control differences, which is how :func:`rosenbaum_unadjusted`
computes it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .design import Experiment
from .errors import (
    DegenerateError,
    MissingCovariatesError,
    NoBracketError,
    NonMonotoneError,
)
from .ols import LeastSquaresFit, Residualizer, hc2_cov, ols_fit
from .ranks import UP, TiePolicy, rank, up_ranks

__all__ = [
    "Estimate", "InversionSolver", "LeastSquaresFit", "ols_fit",
    "diff_in_means", "rosenbaum_unadjusted", "adjusted_wrs", "rosenbaum_adjusted",
    "ols_adjusted_estimator", "lin_interaction_estimator", "invert_estimating_function",
    "normal_ci", "wrs_estimating_function",
]

# above this many treated-control pairs the median is found by inversion instead
PAIRWISE_LIMIT = 20_000_000


@dataclass
class Estimate:
    """A point estimate with optional standard error and confidence interval.

    ``ci`` is ``(lo, hi, level)``. ``method`` is a short tag such as
    ``"rank"`` or ``"dm"``; ``diagnostics`` holds solver and data notes.
    """

    point: float
    se: Optional[float] = None
    ci: Optional[tuple] = None
    method: str = ""
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.point = float(self.point)
        if self.se is not None:
            if not self.se >= 0:
                raise ValueError(f"standard error must be non-negative, got {self.se}")
            self.se = float(self.se)
        if self.ci is not None:
            lo, hi, level = self.ci
            if not 0 < level < 1:
                raise ValueError("confidence level must lie in (0, 1)")
            if not lo <= self.point <= hi:
                raise ValueError(f"interval [{lo}, {hi}] does not contain {self.point}")
            self.ci = (float(lo), float(hi), float(level))

    @property
    def length(self):
        return None if self.ci is None else self.ci[1] - self.ci[0]


@dataclass(frozen=True)
class InversionSolver:
    """Settings for bracketing and bisecting a non-increasing step function.

    The bracket starts at the difference-in-means estimate plus or minus
    ``bracket_iqr`` interquartile ranges of ``y`` and widens by ``expansion``
    until the estimating function changes sign. Bisection stops once the
    bracket is narrower than ``rel_tol`` times the response scale.
    """

    expansion: float = 2.0
    rel_tol: float = 1e-8
    max_iter: int = 200
    grid_size: int = 64
    bracket_iqr: float = 4.0

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.expansion <= 1:
            raise ValueError("expansion factor must exceed 1")
        if self.grid_size < 2:
            raise ValueError("grid_size must be at least 2")


DEFAULT_SOLVER = InversionSolver()


def response_scale(y) -> float:
    """IQR of ``y``, falling back to max|y| and then 1 for constant data."""
    y = np.asarray(y, dtype=float)
    q75, q25 = np.percentile(y, [75, 25])
    s = q75 - q25
    if s > 0:
        return float(s)
    s = float(np.max(np.abs(y - np.median(y))))
    if s > 0:
        return s
    s = float(np.max(np.abs(y)))
    return s if s > 0 else 1.0


def normal_ci(point, se, level):
    zq = stats.norm.ppf(0.5 + level / 2.0)
    return (point - zq * se, point + zq * se, level)


def _require_covariates(exp):
    if not exp.has_covariates:
        raise MissingCovariatesError("this estimator needs covariates")


def diff_in_means(exp: Experiment, with_se: bool = True, level: Optional[float] = None) -> Estimate:
    """Treated mean minus control mean, with the Neyman two-sample standard error."""
    yt = exp.y[exp.treated]
    yc = exp.y[~exp.treated]
    point = yt.mean() - yc.mean()
    se = None
    ci = None
    if with_se:
        if len(yt) < 2 or len(yc) < 2:
            raise DegenerateError("Neyman standard error needs at least two units per arm")
        se = math.sqrt(yt.var(ddof=1) / len(yt) + yc.var(ddof=1) / len(yc))
        if level is not None:
            ci = normal_ci(point, se, level)
    return Estimate(point, se, ci, "dm")


def _pairwise_count_ge(yt, yc_sorted):
    # tau -> #{(i, j): yt_i - yc_j >= tau}
    def count(tau):
        return int(np.searchsorted(yc_sorted, yt - tau, side="right").sum())
    return count


def rosenbaum_unadjusted(exp: Experiment, solver: InversionSolver = DEFAULT_SOLVER,
                         policy=UP) -> Estimate:
    """Rank-sum inversion estimator without covariates.

    Under up-ranks this equals the median of the ``m (N - m)``
    treated-minus-control differences (with an even count, the midpoint of
    the two central order statistics), which is how it is computed. Very
    large problems, and other tie policies, solve the rank-sum equation by
    bisection instead.
    """
    policy = TiePolicy.parse(policy)
    yt = exp.y[exp.treated]
    yc = exp.y[~exp.treated]
    k = len(yt) * len(yc)
    start = diff_in_means(exp, with_se=False).point
    if policy.variant != "up":
        g = wrs_estimating_function(exp, policy)
        lo, hi, info = invert_estimating_function(g, start, exp.y, solver, scan=False)
        return Estimate((lo + hi) / 2.0, method="rank",
                        diagnostics={"n_pairs": k, "route": "inversion", **info})
    if k <= PAIRWISE_LIMIT:
        d = (yt[:, None] - yc[None, :]).ravel()
        return Estimate(float(np.median(d)), method="rank",
                        diagnostics={"n_pairs": k, "route": "pairwise"})
    count = _pairwise_count_ge(yt, np.sort(yc))
    g = lambda tau: count(tau) - k / 2.0  # noqa: E731
    lo, hi, info = invert_estimating_function(g, start, exp.y, solver, scan=False)
    return Estimate((lo + hi) / 2.0, method="rank",
                    diagnostics={"n_pairs": k, "route": "inversion", **info})


def wrs_estimating_function(exp: Experiment, policy=UP) -> Callable[[float], float]:
    """``tau -> N * (treated rank sum of y - tau z) - m * (sum of all ranks)``.

    This is ``N`` times the centered rank sum; scaling by ``N`` keeps every
    term an exact small integer (or half-integer) so the sign is never
    blurred by rounding.
    """
    policy = TiePolicy.parse(policy)
    n, m = exp.n, exp.m
    treated = exp.treated

    def g(tau):
        q = rank(exp.adjusted(tau), policy).ranks
        return n * q[treated].sum() - m * q.sum()

    return g


def _bisect(pred, a, b, tol, max_iter):
    """Shrink ``[a, b]`` with ``pred(a)`` true and ``pred(b)`` false; returns (a, b, iterations)."""
    it = 0
    while b - a > tol and it < max_iter:
        mid = a + (b - a) / 2.0
        if mid <= a or mid >= b:
            break
        if pred(mid):
            a = mid
        else:
            b = mid
        it += 1
    return a, b, it


def invert_estimating_function(g: Callable[[float], float], start: float, y,
                               solver: InversionSolver = DEFAULT_SOLVER,
                               scan: bool = True):
    """Find ``sup{t: g(t) > 0}`` and ``inf{t: g(t) < 0}`` for a non-increasing ``g``.

    Returns ``(tau_star, tau_star2, diagnostics)``. With ``scan`` the sign of
    ``g`` is tabulated on ``solver.grid_size`` points across the bracket and
    more than one sign crossing raises :class:`NonMonotoneError`.
    """
    scale = response_scale(y)
    tol = solver.rel_tol * scale
    half = solver.bracket_iqr * scale
    lo, hi = start - half, start + half
    iters = 0
    while g(lo) <= 0:
        iters += 1
        if iters > solver.max_iter:
            raise NoBracketError("estimating function never positive while widening the bracket")
        lo = start - (start - lo) * solver.expansion
    while g(hi) >= 0:
        iters += 1
        if iters > solver.max_iter:
            raise NoBracketError("estimating function never negative while widening the bracket")
        hi = start + (hi - start) * solver.expansion

    a1, b1, it1 = _bisect(lambda t: g(t) > 0, lo, hi, tol, solver.max_iter)
    a2, b2, it2 = _bisect(lambda t: g(t) >= 0, lo, hi, tol, solver.max_iter)
    tau_star = a1 + (b1 - a1) / 2.0
    tau_star2 = a2 + (b2 - a2) / 2.0
    info = {
        "bracket": (lo, hi),
        "expansion_steps": iters,
        "bisection_iterations": it1 + it2,
        "tolerance": tol,
        "tau_star": tau_star,
        "tau_star2": tau_star2,
    }
    if scan:
        grid = np.linspace(lo, hi, solver.grid_size)
        values = np.array([g(t) for t in grid])
        signs = np.sign(values)
        nz = signs[signs != 0]
        crossings = int(np.sum(np.diff(nz) != 0))
        monotone = bool(np.all(np.diff(values) <= 0))
        info["scan_crossings"] = crossings
        info["scan_monotone"] = monotone
        if crossings > 1 or (nz.size and np.any(np.diff(nz) > 0)):
            raise NonMonotoneError(
                f"estimating function changes sign {crossings} times on the scan grid",
                diagnostics=info)
    return tau_star, tau_star2, info


def adjusted_wrs(exp: Experiment, tau: float, policy=UP) -> tuple[float, float]:
    """Rank-sum of treated residuals from regressing ``y - tau z`` on ``[1, x]``.

    Returns ``(stat, null_mean)`` where ``null_mean = (m/N) * sum(q)`` is the
    randomization mean given the residual ranks ``q`` (tie-aware).
    """
    _require_covariates(exp)
    e = Residualizer(exp.x).residuals(exp.adjusted(tau))
    q = rank(e, policy).ranks
    return float(q[exp.treated].sum()), exp.m / exp.n * float(q.sum())


def _adjusted_estimating_function(exp, policy, residualizer):
    r_y = residualizer.residuals(exp.y, snap=False)
    r_z = residualizer.residuals(exp.z.astype(float), snap=False)
    treated = exp.treated
    n, m = exp.n, exp.m
    policy = TiePolicy.parse(policy)
    fast = policy.variant == "up"
    scale_y = float(np.max(np.abs(r_y)))
    scale_z = float(np.max(np.abs(r_z)))

    def g(tau):
        e = r_y - tau * r_z
        snap = 1e-12 * (scale_y + abs(tau) * scale_z)
        e[np.abs(e) <= snap] = 0.0
        q = up_ranks(e) if fast else rank(e, policy).ranks
        # scaled by N so the comparison with zero is exact
        return n * q[treated].sum() - m * q.sum()

    return g, float(np.any(np.abs(r_z) > 1e-12 * max(1.0, scale_z)))


def rosenbaum_adjusted(exp: Experiment, solver: InversionSolver = DEFAULT_SOLVER,
                       policy=UP, residualizer: Optional[Residualizer] = None) -> Estimate:
    """Regression-adjusted rank-sum inversion estimator.

    Residuals of ``y - tau z`` on ``[1, x]`` replace the adjusted responses;
    the effect solves "residual rank-sum equals its randomization mean".
    """
    _require_covariates(exp)
    res = residualizer or Residualizer(exp.x)
    g, informative = _adjusted_estimating_function(exp, policy, res)
    if not informative:
        raise NoBracketError("treatment indicator lies in the covariate span")
    start = diff_in_means(exp, with_se=False).point
    lo, hi, info = invert_estimating_function(g, start, exp.y, solver, scan=True)
    return Estimate((lo + hi) / 2.0, method="rank_adj", diagnostics=info)


def _robust_coefficient(exp, design_extra, method, level):
    fit = ols_fit(exp.y, design_extra, add_intercept=True)
    j = 1  # column of z, right after the intercept
    if j in fit.dropped:
        raise DegenerateError("treatment column is collinear with the covariates")
    cov = hc2_cov(fit)
    se = float(math.sqrt(max(cov[j, j], 0.0)))
    point = float(fit.coefficients[j])
    ci = normal_ci(point, se, level) if level is not None else None
    return Estimate(point, se, ci, method, diagnostics=dict(fit.diagnostics))


def ols_adjusted_estimator(exp: Experiment, level: Optional[float] = None) -> Estimate:
    """Coefficient on ``z`` in least squares of ``y`` on ``[1, z, x]``, with HC2 standard error."""
    _require_covariates(exp)
    return _robust_coefficient(exp, np.column_stack([exp.z, exp.x]), "ols_adj", level)


def lin_interaction_estimator(exp: Experiment, level: Optional[float] = None) -> Estimate:
    """Coefficient on ``z`` in ``y ~ 1 + z + xc + z * xc`` with centered covariates ``xc``; HC2 SE."""
    _require_covariates(exp)
    xc = exp.x - exp.x.mean(axis=0)
    z = exp.z.astype(float)
    return _robust_coefficient(exp, np.column_stack([z, xc, z[:, None] * xc]), "lin", level)
