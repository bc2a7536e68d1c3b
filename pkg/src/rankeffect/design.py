"""Completely randomized experiments: data model and assignment law.

Treatment is assigned by simple random sampling without replacement: exactly
``m`` of ``n`` units are treated and every one of the ``C(n, m)`` subsets is
equally likely.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .errors import (
    InvalidExperimentError,
    InvalidTreatedCountError,
    LengthMismatchError,
    NonFiniteInputError,
    TooLargeError,
)

ENUMERATION_CAP = 2_000_000


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Experiment:
    """Observed data from one completely randomized experiment.

    Parameters
    ----------
    y : array_like, shape (N,)
        Observed responses.
    z : array_like, shape (N,)
        Binary treatment indicators; ``sum(z) = m`` with ``1 <= m <= N - 1``.
    x : array_like, shape (N, p), optional
        Pre-treatment covariates without an intercept column.

    Arrays are copied and made read-only, so instances can be shared freely.
    """

    y: np.ndarray
    z: np.ndarray
    x: Optional[np.ndarray] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        z_raw = np.asarray(self.z)
        if y.ndim != 1 or z_raw.ndim != 1:
            raise InvalidExperimentError("y and z must be one-dimensional")
        if y.shape[0] != z_raw.shape[0]:
            raise LengthMismatchError(
                f"y has length {y.shape[0]} but z has length {z_raw.shape[0]}")
        n = y.shape[0]
        if n < 2:
            raise InvalidExperimentError("need at least two units")
        if not np.all(np.isin(z_raw, (0, 1))):
            raise InvalidExperimentError("z must contain only 0 and 1")
        if not np.all(np.isfinite(y)):
            raise NonFiniteInputError("responses must be finite")
        m = int(np.sum(z_raw))
        if not 1 <= m <= n - 1:
            raise InvalidTreatedCountError(
                f"treated count m={m} must lie in [1, {n - 1}]")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "z", _frozen(z_raw, dtype=np.int8))
        if self.x is not None:
            x = np.asarray(self.x, dtype=float)
            if x.ndim == 1:
                x = x[:, None]
            if x.ndim != 2 or x.shape[0] != n:
                raise LengthMismatchError(
                    f"covariate matrix must have {n} rows, got shape {x.shape}")
            if not np.all(np.isfinite(x)):
                raise NonFiniteInputError("covariates must be finite")
            object.__setattr__(self, "x", _frozen(x))

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def m(self) -> int:
        return int(np.sum(self.z))

    @property
    def p(self) -> int:
        return 0 if self.x is None else int(self.x.shape[1])

    @property
    def has_covariates(self) -> bool:
        return self.x is not None

    @property
    def treated(self) -> np.ndarray:
        return self.z.astype(bool)

    def adjusted(self, tau: float) -> np.ndarray:
        """Adjusted responses ``y - tau * z``."""
        return self.y - tau * self.z

    def with_responses(self, y) -> "Experiment":
        return Experiment(y, self.z, self.x)


@dataclass(frozen=True)
class PotentialOutcomes:
    """Treated and control potential outcomes under a constant additive effect."""

    a: np.ndarray
    b: np.ndarray
    tau: float
    x: Optional[np.ndarray] = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise LengthMismatchError("a and b must be vectors of equal length")
        scale = max(1.0, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
        if not np.allclose(a - b, self.tau, rtol=0.0, atol=1e-12 * scale):
            raise InvalidExperimentError("a - b must equal tau for every unit")
        object.__setattr__(self, "a", _frozen(a))
        object.__setattr__(self, "b", _frozen(b))
        if self.x is not None:
            object.__setattr__(self, "x", _frozen(self.x))

    @classmethod
    def from_control(cls, b, tau, x=None) -> "PotentialOutcomes":
        b = np.asarray(b, dtype=float)
        return cls(b + tau, b, float(tau), x)

    @property
    def n(self) -> int:
        return int(self.a.shape[0])


@dataclass(frozen=True)
class AssignmentSpace:
    """Set of assignments a null distribution is evaluated over.

    ``mode`` is ``"exact"`` (full enumeration, only when ``C(n, m)`` is at
    most ``cap``) or ``"monte-carlo"`` (``draws`` uniform assignments drawn
    from ``seed``).
    """

    n: int
    m: int
    mode: str = "exact"
    draws: int = 10_000
    seed: Optional[int] = None
    cap: int = ENUMERATION_CAP

    def __post_init__(self):
        _check_m(self.n, self.m)
        if self.mode not in ("exact", "monte-carlo"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "exact" and math.comb(self.n, self.m) > self.cap:
            raise TooLargeError(
                f"C({self.n}, {self.m}) = {math.comb(self.n, self.m)} exceeds "
                f"the enumeration cap {self.cap}")
        if self.mode == "monte-carlo" and self.draws < 1:
            raise ValueError("need at least one Monte Carlo draw")

    @property
    def size(self) -> int:
        if self.mode == "exact":
            return math.comb(self.n, self.m)
        return self.draws

    @classmethod
    def auto(cls, n, m, draws=10_000, seed=None, cap=ENUMERATION_CAP):
        """Exact when enumeration fits under the cap, Monte Carlo otherwise."""
        if math.comb(n, m) <= cap:
            return cls(n, m, "exact", cap=cap)
        return cls(n, m, "monte-carlo", draws=draws, seed=seed, cap=cap)


def _check_m(n, m):
    if not 1 <= m <= n - 1:
        raise InvalidTreatedCountError(f"treated count m={m} must lie in [1, {n - 1}]")


def draw_assignment(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw one assignment with exactly ``m`` treated units.

    Partial Fisher-Yates shuffle of ``0..n-1``: the first ``m`` positions
    after ``m`` swap steps form a uniformly random ``m``-subset.
    """
    _check_m(n, m)
    idx = np.arange(n)
    picks = rng.integers(np.arange(m), n)
    for k, j in enumerate(picks.tolist()):
        idx[k], idx[j] = idx[j], idx[k]
    z = np.zeros(n, dtype=np.int8)
    z[idx[:m]] = 1
    return z


def draw_assignments(n: int, m: int, draws: int, rng: np.random.Generator,
                     chunk: int = 4096) -> Iterator[np.ndarray]:
    """Yield boolean blocks of shape ``(k, n)`` holding ``draws`` uniform assignments.

    Rows are ranked i.i.d. uniforms; the ``m`` smallest mark the treated set,
    which is uniform over all ``m``-subsets.
    """
    _check_m(n, m)
    done = 0
    while done < draws:
        k = min(chunk, draws - done)
        u = rng.random((k, n))
        part = np.argpartition(u, m - 1, axis=1)[:, :m]
        block = np.zeros((k, n), dtype=bool)
        np.put_along_axis(block, part, True, axis=1)
        yield block
        done += k


def enumerate_assignments(n: int, m: int, cap: int = ENUMERATION_CAP) -> Iterator[np.ndarray]:
    """Yield every assignment with ``m`` treated units, lexicographic in the treated indices."""
    _check_m(n, m)
    total = math.comb(n, m)
    if total > cap:
        raise TooLargeError(f"C({n}, {m}) = {total} exceeds the enumeration cap {cap}")
    return _enumerate(n, m)


def _enumerate(n, m):
    for combo in itertools.combinations(range(n), m):
        z = np.zeros(n, dtype=np.int8)
        z[list(combo)] = 1
        yield z


def enumerate_treated_sets(n: int, m: int, cap: int = ENUMERATION_CAP,
                           chunk: int = 65536) -> Iterator[np.ndarray]:
    """Chunked variant of :func:`enumerate_assignments` yielding index arrays of shape ``(k, m)``."""
    _check_m(n, m)
    total = math.comb(n, m)
    if total > cap:
        raise TooLargeError(f"C({n}, {m}) = {total} exceeds the enumeration cap {cap}")
    combos = itertools.combinations(range(n), m)
    while True:
        block = list(itertools.islice(combos, chunk))
        if not block:
            return
        yield np.array(block, dtype=np.intp).reshape(len(block), m)


def realize(po: PotentialOutcomes, z) -> Experiment:
    """Observed experiment ``y = z * a + (1 - z) * b`` for assignment ``z``."""
    z = np.asarray(z)
    if z.shape != (po.n,):
        raise LengthMismatchError(f"assignment has shape {z.shape}, expected ({po.n},)")
    y = np.where(z == 1, po.a, po.b)
    return Experiment(y, z, po.x)
