"""Least squares via pivoted QR, leverages and HC2 covariance."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

__all__ = ["LeastSquaresFit", "ols_fit", "Residualizer", "hc2_cov", "design_with_intercept"]

# residuals this far below the response scale are rounding noise of an exact fit
_SNAP = 1e-12


def design_with_intercept(x, n):
    if x is None:
        return np.ones((n, 1))
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return np.column_stack([np.ones(n), x])


def _pivoted_qr(a):
    q, r, piv = sla.qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        rank = 0
    else:
        tol = max(a.shape) * np.finfo(float).eps * diag[0]
        rank = int(np.sum(diag > tol))
    return q, r, piv, rank


@dataclass
class LeastSquaresFit:
    """Result of :func:`ols_fit`.

    ``coefficients`` follows the column order of ``design``; columns dropped
    for rank deficiency get coefficient 0 and are listed in ``dropped``.
    """

    coefficients: np.ndarray
    residuals: np.ndarray
    hat_diag: np.ndarray
    rank: int
    design: np.ndarray
    kept: np.ndarray
    dropped: np.ndarray
    r_kept: np.ndarray = field(repr=False)
    q_kept: np.ndarray = field(repr=False)
    pivot: np.ndarray = field(repr=False, default=None)
    diagnostics: dict = field(default_factory=dict)

    @property
    def fitted(self):
        return self.design @ self.coefficients


def ols_fit(responses, x=None, add_intercept=True) -> LeastSquaresFit:
    """Least squares of ``responses`` on ``x`` (with an intercept column prepended by default).

    Rank-deficient designs are handled by column pivoting: dependent columns
    are dropped, reported in ``dropped`` and ``diagnostics["rank_deficient"]``.
    """
    v = np.asarray(responses, dtype=float)
    n = v.shape[0]
    if add_intercept:
        a = design_with_intercept(x, n)
    else:
        a = np.asarray(x, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
    if a.shape[0] != n:
        raise ValueError("design and responses have different numbers of rows")
    q, r, piv, rank = _pivoted_qr(a)
    if rank >= n:
        raise ValueError(f"need more observations ({n}) than design rank ({rank})")
    qk = q[:, :rank]
    rk = r[:rank, :rank]
    kept = np.sort(piv[:rank])
    dropped = np.sort(piv[rank:])
    coef = np.zeros(a.shape[1])
    if rank:
        coef[piv[:rank]] = sla.solve_triangular(rk, qk.T @ v)
    resid = v - qk @ (qk.T @ v)
    hat = np.einsum("ij,ij->i", qk, qk)
    diagnostics = {"rank_deficient": bool(dropped.size), "n_dropped": int(dropped.size)}
    if rank <= 1 and a.shape[1] > 1:
        diagnostics["rank_collapse"] = True
    return LeastSquaresFit(coef, resid, hat, rank, a, kept, dropped,
                           rk, qk, piv[:rank], diagnostics)


def hc2_cov(fit: LeastSquaresFit) -> np.ndarray:
    """HC2 sandwich covariance of the coefficients of the kept columns.

    Returned matrix is indexed like ``fit.design`` columns; dropped columns
    get NaN rows and columns.
    """
    p = fit.design.shape[1]
    out = np.full((p, p), np.nan)
    if fit.rank == 0:
        return out
    one_minus_h = 1.0 - fit.hat_diag
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(one_minus_h > 1e-12, fit.residuals ** 2 / one_minus_h, 0.0)
    # r_kept is the triangular factor of design[:, pivot]
    a = fit.design[:, fit.pivot]
    r_inv = sla.solve_triangular(fit.r_kept, np.eye(fit.rank))
    xtx_inv = r_inv @ r_inv.T
    meat = (a * w[:, None]).T @ a
    out[np.ix_(fit.pivot, fit.pivot)] = xtx_inv @ meat @ xtx_inv
    return out


class Residualizer:
    """Projects vectors off the column space of ``[1, x]``.

    The orthonormal basis is computed once, so residualizing many candidate
    response vectors (as in estimator inversion) costs ``O(N p)`` each.
    """

    def __init__(self, x, n=None):
        if x is None and n is None:
            raise ValueError("need covariates or a row count")
        n = n if x is None else np.asarray(x).shape[0]
        q, _, _, rank = _pivoted_qr(design_with_intercept(x, n))
        self.basis = q[:, :rank]
        self.rank = rank
        self.n = n

    @property
    def hat_diag(self):
        return np.einsum("ij,ij->i", self.basis, self.basis)

    def residuals(self, v, snap=True):
        v = np.asarray(v, dtype=float)
        e = v - self.basis @ (self.basis.T @ v)
        if snap:
            scale = float(np.max(np.abs(v))) if v.size else 0.0
            e[np.abs(e) <= _SNAP * scale] = 0.0
        return e
