"""Ranks under several tie policies and the Wilcoxon rank-sum statistic.

The default policy is up-ranks: the rank of ``v_j`` is the number of entries
``v_i <= v_j``. Tied values therefore all receive the largest rank of their
block. Average ranks and seeded random tie-breaking are available for
sensitivity checks.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateError, NonFiniteInputError

__all__ = [
    "TiePolicy", "RankVector", "UP", "AVERAGE", "rank", "up_ranks",
    "wrs_statistic", "wrs_null_moments", "avg_rank_ss_identity", "tie_blocks",
]


@dataclass(frozen=True)
class TiePolicy:
    """How tied values are ranked: ``"up"``, ``"average"`` or ``"random"``."""

    variant: str = "up"
    seed: Optional[int] = None

    def __post_init__(self):
        if self.variant not in ("up", "average", "random"):
            raise ValueError(f"unknown tie policy {self.variant!r}")

    @classmethod
    def parse(cls, spec) -> "TiePolicy":
        """Accept a TiePolicy, ``"up"``, ``"average"``, ``"random"`` or ``"random:SEED"``."""
        if isinstance(spec, TiePolicy):
            return spec
        if spec is None:
            return UP
        name, _, seed = str(spec).partition(":")
        name = {"up-rank": "up", "uprank": "up", "avg": "average"}.get(name, name)
        return cls(name, int(seed) if seed else None)


UP = TiePolicy("up")
AVERAGE = TiePolicy("average")


@dataclass(frozen=True)
class RankVector:
    ranks: np.ndarray
    policy: TiePolicy

    def __len__(self):
        return len(self.ranks)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.ranks, dtype=dtype)


def _check_finite(v):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError("expected a one-dimensional vector")
    if not np.all(np.isfinite(v)):
        raise NonFiniteInputError("cannot rank non-finite values")
    return v


def up_ranks(v) -> np.ndarray:
    """``q_j = #{i : v_i <= v_j}`` as floats. No finiteness check."""
    s = np.sort(v)
    return np.searchsorted(s, v, side="right").astype(float)


def _average_ranks(v):
    s = np.sort(v)
    hi = np.searchsorted(s, v, side="right")
    lo = np.searchsorted(s, v, side="left")
    # block occupies positions lo+1..hi
    return (lo + 1 + hi) / 2.0


def rank(v, policy=UP) -> RankVector:
    """Rank ``v`` under ``policy``.

    Examples
    --------
    >>> rank([3, 1, 4, 1, 5]).ranks
    array([3., 2., 4., 2., 5.])
    >>> rank([3, 1, 4, 1, 5], AVERAGE).ranks
    array([3. , 1.5, 4. , 1.5, 5. ])
    """
    policy = TiePolicy.parse(policy)
    v = _check_finite(v)
    if policy.variant == "up":
        r = up_ranks(v)
    elif policy.variant == "average":
        r = _average_ranks(v)
    else:
        rng = np.random.default_rng(policy.seed)
        jitter = rng.permutation(len(v))
        order = np.lexsort((jitter, v))
        r = np.empty(len(v))
        r[order] = np.arange(1, len(v) + 1)
    return RankVector(r, policy)


def wrs_statistic(exp, tau0: float = 0.0, policy=UP) -> float:
    """Wilcoxon rank-sum of the treated units among the adjusted responses ``y - tau0 * z``."""
    q = rank(exp.adjusted(tau0), policy).ranks
    return float(np.sum(q[exp.treated]))


def wrs_null_moments(adjusted, m: int, policy=UP) -> tuple[float, float]:
    """Exact randomization mean and variance of the rank-sum when ``adjusted`` is held fixed.

    With ``q`` the ranks of ``adjusted`` under ``policy``, the treated rank
    sum over a uniformly drawn ``m``-subset has mean ``(m/N) * sum(q)`` and
    variance ``(m/N)(1 - m/N) N/(N-1) * sum((q - qbar)^2)``.
    """
    q = rank(adjusted, policy).ranks
    n = len(q)
    if n < 2 or not 1 <= m <= n - 1:
        raise DegenerateError(f"need N >= 2 and 1 <= m <= N-1, got N={n}, m={m}")
    frac = m / n
    mean = frac * float(np.sum(q))
    ss = float(np.sum((q - q.mean()) ** 2))
    var = frac * (1.0 - frac) * n / (n - 1) * ss
    return mean, var


def tie_blocks(v) -> np.ndarray:
    """Sizes of the blocks of equal values in ``v``, in ascending value order."""
    v = _check_finite(v)
    _, counts = np.unique(v, return_counts=True)
    return counts


def avg_rank_ss_identity(block_sizes) -> float:
    """Sum of squared deviations of average ranks, from the tie-block sizes alone.

    Returns ``N(N^2 - 1)/12 - sum_j t_j (t_j^2 - 1)/12`` with ``N = sum_j t_j``.
    """
    t = np.asarray(block_sizes, dtype=float)
    if t.size == 0:
        raise ValueError("need at least one tie block")
    if np.any(t < 1) or np.any(t != np.round(t)):
        raise ValueError("block sizes must be positive integers")
    n = t.sum()
    return float(n * (n * n - 1) / 12.0 - np.sum(t * (t * t - 1)) / 12.0)
