"""Seeded Monte Carlo coverage study for the rank and mean-based estimators.

Three data-generating settings share ``N`` units, uniform covariates and a
constant effect ``tau0``:

==========  ==========================  ===================================
setting     covariate                   treated outcome
==========  ==========================  ===================================
1           ``x ~ U(-4, 4)``            ``v + eps``, ``v`` exponential, mean 10
2           ``x ~ U(-4, 4)``            ``3 x + eps``
3           ``x = exp(u)``, ``u ~ U``   ``(x + sqrt(x)) / 4 + eps``
==========  ==========================  ===================================

Control outcomes are treated outcomes minus ``tau0``. Errors are standard
normal, Cauchy (``t1``) or Student t with 3 degrees of freedom (``t3``).

Replication ``r`` draws everything from ``Philox(key=base_seed ^ r)`` and
results are aggregated in replication order, so reports do not depend on
how replications are spread across worker processes.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .design import PotentialOutcomes, draw_assignment, realize
from .errors import DegenerateError, NoOracleError, RankEffectError
from .estimators import (
    diff_in_means,
    lin_interaction_estimator,
    ols_adjusted_estimator,
    rosenbaum_adjusted,
    rosenbaum_unadjusted,
)
from .ols import Residualizer
from .variance import NuConfig, rank_ci, v_hat_plugin, w_hat_plugin

__all__ = [
    "SimulationSetting", "SimulationReport", "METHODS", "ORACLE_METHODS",
    "simulate_experiment", "run_cell", "run_oracle_cell", "normality_diagnostic",
    "oracle_functional", "error_overlap",
]

METHODS = ("rank", "dm", "rank_adj", "ols_adj", "lin")
ORACLE_METHODS = ("rank_oracle", "rank_adj_oracle")
ERRORS = ("normal", "t1", "t3")


@dataclass(frozen=True)
class SimulationSetting:
    """One cell of the coverage study."""

    setting: int = 1
    n: int = 1000
    prop: float = 0.5
    tau0: float = 2.0
    error: str = "normal"
    reps: int = 1000
    base_seed: int = 0
    nu: float = 1.0 / 3.0
    level: float = 0.95
    plugin_diagonal: bool = False

    def __post_init__(self):
        if self.setting not in (1, 2, 3):
            raise ValueError(f"setting must be 1, 2 or 3, got {self.setting}")
        if self.error not in ERRORS:
            raise ValueError(f"error must be one of {ERRORS}, got {self.error!r}")
        if not 0 < self.prop < 1:
            raise ValueError("treated proportion must lie in (0, 1)")
        if self.reps < 1:
            raise ValueError("need at least one replication")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        NuConfig(self.nu)
        if not 1 <= self.m <= self.n - 1:
            raise ValueError(f"treated count {self.m} leaves an empty arm")

    @property
    def m(self) -> int:
        # round half up
        return int(math.floor(self.prop * self.n + 0.5))

    @property
    def label(self) -> str:
        return f"{self.setting}{'abc'[ERRORS.index(self.error)]}"


@dataclass
class SimulationReport:
    """Per-method coverage and mean interval length.

    ``rows`` hold ``method``, ``coverage``, ``mean_length``, ``mc_se`` and
    ``exclusions``; ``points`` keeps per-replication point estimates (NaN
    when excluded) for methods that were asked to retain them.
    """

    setting: SimulationSetting
    rows: list
    wall_time: float = 0.0
    oracle: dict = field(default_factory=dict)
    points: dict = field(default_factory=dict, repr=False)

    def row(self, method) -> dict:
        for r in self.rows:
            if r["method"] == method:
                return r
        raise KeyError(method)

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self.setting), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "coverage", "mean_length", "mc_se", "exclusions"])
        for r in self.rows:
            w.writerow([r["method"], repr(r["coverage"]), repr(r["mean_length"]),
                        repr(r["mc_se"]), r["exclusions"]])
        return buf.getvalue()

    def to_json(self) -> str:
        from . import __version__
        doc = {
            "provenance": {
                "version": __version__,
                "seed": self.setting.base_seed,
                "config_sha256": self.config_hash(),
            },
            "setting": asdict(self.setting),
            "oracle": self.oracle,
            "rows": self.rows,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# data generation

def _errors(rng, n, kind):
    if kind == "normal":
        return rng.standard_normal(n)
    if kind == "t1":
        return rng.standard_normal(n) / rng.standard_normal(n)
    z = rng.standard_normal(n)
    chi2 = np.sum(rng.standard_normal((3, n)) ** 2, axis=0)
    return z / np.sqrt(chi2 / 3.0)


def replication_rng(base_seed: int, r: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(base_seed) ^ int(r)))


def simulate_experiment(setting: SimulationSetting, r: int):
    """Potential outcomes and realized experiment for replication ``r``."""
    rng = replication_rng(setting.base_seed, r)
    n = setting.n
    u = rng.uniform(-4.0, 4.0, n)
    if setting.setting == 1:
        x = u
        signal = rng.exponential(10.0, n)
    elif setting.setting == 2:
        x = u
        signal = 3.0 * x
    else:
        x = np.exp(u)
        signal = 0.25 * (x + np.sqrt(x))
    a = signal + _errors(rng, n, setting.error)
    po = PotentialOutcomes.from_control(a - setting.tau0, setting.tau0, x)
    z = draw_assignment(n, setting.m, rng)
    return po, realize(po, z)


# ---------------------------------------------------------------------------
# oracle functionals

def error_overlap(kind: str, d):
    """``integral f(y) f(y + d) dy`` for the error density ``f``."""
    d = np.asarray(d, dtype=float)
    if kind == "normal":
        return np.exp(-d * d / 4.0) / (2.0 * math.sqrt(math.pi))
    if kind == "t1":
        return 2.0 / (math.pi * (4.0 + d * d))
    if kind == "t3":
        # Fourier inversion of the squared characteristic function (1 + s|t|)^2 exp(-2 s|t|)
        s = math.sqrt(3.0)
        w = 2.0 * s - 1j * d
        return np.real(1.0 / w + 2.0 * s / w ** 2 + 2.0 * 3.0 / w ** 3) / math.pi
    raise ValueError(f"unknown error kind {kind!r}")


def _gauss_legendre_grid(a, b, panels, order=8):
    t, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = np.diff(edges)[:, None] / 2.0
    mid = (edges[:-1] + edges[1:])[:, None] / 2.0
    return (mid + half * t).ravel(), (half * w).ravel()


def _setting3_signal(adjusted):
    """Signal of setting 3 as a function of ``u``, optionally minus its population projection on ``[1, exp(u)]``."""
    if not adjusted:
        return lambda u: 0.25 * (np.exp(u) + np.exp(u / 2.0))

    def moment(k):  # E exp(k u) for u ~ U(-4, 4)
        return 1.0 if k == 0 else (math.exp(4 * k) - math.exp(-4 * k)) / (8 * k)

    # regress exp(u/2) on [1, exp(u)]; exp(u) itself lies in the span
    cov = moment(1.5) - moment(0.5) * moment(1)
    var = moment(2) - moment(1) ** 2
    slope = cov / var
    icpt = moment(0.5) - slope * moment(1)
    return lambda u: 0.25 * (np.exp(u / 2.0) - icpt - slope * np.exp(u))


@lru_cache(maxsize=None)
def oracle_functional(setting: int, error: str, adjusted: bool) -> float:
    """Limit of the overlap functional for a setting, by quadrature.

    For control outcomes ``w + eps`` with independent ``eps`` the squared
    density integral equals ``E g(w - w')`` where ``g`` is the error
    overlap. For the adjusted version ``w`` is replaced by its residual
    from the population projection on ``[1, x]``. Cauchy errors have no
    mean, so that projection does not exist and the adjusted oracle is
    unavailable.
    """
    if adjusted and error == "t1":
        raise NoOracleError("least-squares projection has no population limit under Cauchy errors")
    g = lambda d: error_overlap(error, d)  # noqa: E731
    if setting == 1:
        # v - v' is Laplace with scale 10; x is independent so adjustment changes nothing
        val, _ = integrate.quad(lambda d: g(d) * np.exp(-abs(d) / 10.0) / 20.0, 0, np.inf,
                                epsabs=1e-13, epsrel=1e-11, limit=500)
        return 2.0 * val
    if setting == 2:
        if adjusted:
            return float(g(0.0))
        val, _ = integrate.quad(lambda d: g(d) * (24.0 - d) / 576.0, 0, 24,
                                epsabs=1e-13, epsrel=1e-11, limit=500)
        return 2.0 * val
    signal = _setting3_signal(adjusted)
    u, w = _gauss_legendre_grid(-4.0, 4.0, 400)
    s = signal(u)
    w = w / 8.0
    total = 0.0
    for k in range(0, u.size, 400):
        diff = s[k:k + 400, None] - s[None, :]
        total += float(w[k:k + 400] @ g(diff) @ w)
    return total


def oracle_sd(setting: SimulationSetting, adjusted: bool) -> float:
    """Asymptotic standard deviation of ``sqrt(N) * (estimate - tau0)``."""
    value = oracle_functional(setting.setting, setting.error, adjusted)
    lam = setting.m / setting.n
    if not value > 0 or not math.isfinite(value):
        raise DegenerateError("oracle functional is degenerate")
    return (12.0 * lam * (1.0 - lam) * value * value) ** -0.5


# ---------------------------------------------------------------------------
# replications

def _oracle_interval(point, value, n, m, level):
    lo, hi = rank_ci(point, value, n, m, level)
    return point, lo, hi


def _replicate(setting: SimulationSetting, methods, r, oracle_values):
    """Point and interval for each method in one replication; failures map to the error name."""
    _, exp = simulate_experiment(setting, r)
    n, m, level, nu = exp.n, exp.m, setting.level, setting.nu
    out = {}
    cache = {}

    def point(kind):
        if kind not in cache:
            if kind == "rank":
                cache[kind] = rosenbaum_unadjusted(exp).point
            else:
                cache["res"] = Residualizer(exp.x)
                cache[kind] = rosenbaum_adjusted(exp, residualizer=cache["res"]).point
        return cache[kind]

    for method in methods:
        try:
            if method == "rank":
                p = point("rank")
                f = v_hat_plugin(exp, p, nu, diagonal=setting.plugin_diagonal)
                out[method] = (p, *rank_ci(p, f, n, m, level))
            elif method == "rank_adj":
                p = point("rank_adj")
                f = w_hat_plugin(exp, p, nu, diagonal=setting.plugin_diagonal,
                                 residualizer=cache["res"])
                out[method] = (p, *rank_ci(p, f, n, m, level))
            elif method == "rank_oracle":
                out[method] = _oracle_interval(point("rank"), oracle_values[method], n, m, level)
            elif method == "rank_adj_oracle":
                out[method] = _oracle_interval(point("rank_adj"), oracle_values[method], n, m, level)
            else:
                est = {"dm": diff_in_means, "ols_adj": ols_adjusted_estimator,
                       "lin": lin_interaction_estimator}[method](exp, level=level)
                out[method] = (est.point, est.ci[0], est.ci[1])
        except RankEffectError as exc:
            out[method] = type(exc).__name__
    return out


def _run_chunk(args):
    setting, methods, reps, oracle_values = args
    return [_replicate(setting, methods, r, oracle_values) for r in reps]


def _run(setting, methods, threads, oracle_values):
    reps = list(range(setting.reps))
    if threads <= 1 or setting.reps < 2:
        return _run_chunk((setting, methods, reps, oracle_values))
    size = max(1, math.ceil(len(reps) / (threads * 4)))
    chunks = [reps[i:i + size] for i in range(0, len(reps), size)]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(_run_chunk, [(setting, methods, c, oracle_values) for c in chunks])
        return [res for part in parts for res in part]


def _aggregate(setting, methods, results):
    rows, points = [], {}
    for method in methods:
        covered, lengths, pts, excluded, reasons = 0, [], [], 0, {}
        for res in results:
            val = res[method]
            if isinstance(val, str):
                excluded += 1
                reasons[val] = reasons.get(val, 0) + 1
                pts.append(math.nan)
                continue
            p, lo, hi = val
            covered += lo <= setting.tau0 <= hi
            lengths.append(hi - lo)
            pts.append(p)
        used = len(lengths)
        cov = covered / used if used else math.nan
        rows.append({
            "method": method,
            "coverage": cov,
            "mean_length": math.fsum(lengths) / used if used else math.nan,
            "mc_se": math.sqrt(cov * (1.0 - cov) / used) if used else math.nan,
            "exclusions": excluded,
            "exclusion_reasons": reasons,
        })
        points[method] = np.array(pts)
    return rows, points


def _oracle_values(setting, methods):
    vals = {}
    if "rank_oracle" in methods:
        vals["rank_oracle"] = oracle_functional(setting.setting, setting.error, False)
    if "rank_adj_oracle" in methods:
        vals["rank_adj_oracle"] = oracle_functional(setting.setting, setting.error, True)
    return vals


def run_cell(setting: SimulationSetting, estimators: Optional[Sequence[str]] = None,
             threads: int = 1) -> SimulationReport:
    """Coverage and mean length of each selected estimator's interval.

    Rank intervals use the plug-in functionals, mean-based ones use robust
    or Neyman standard errors with normal quantiles; ``rank_oracle`` and
    ``rank_adj_oracle`` use the true functional. Replications where an
    estimator fails are excluded from that estimator's row and counted.
    """
    methods = tuple(estimators or METHODS)
    unknown = set(methods) - set(METHODS) - set(ORACLE_METHODS)
    if unknown:
        raise ValueError(f"unknown estimators {sorted(unknown)}")
    oracle_values = _oracle_values(setting, methods)
    t0 = time.perf_counter()
    results = _run(setting, methods, threads, oracle_values)
    rows, points = _aggregate(setting, methods, results)
    return SimulationReport(setting, rows, time.perf_counter() - t0, oracle_values, points)


def run_oracle_cell(setting: SimulationSetting, estimators: Optional[Sequence[str]] = None,
                    threads: int = 1) -> SimulationReport:
    """As :func:`run_cell` with intervals built from the true functional; rank estimators only."""
    estimators = tuple(estimators or ("rank", "rank_adj"))
    mapping = {"rank": "rank_oracle", "rank_adj": "rank_adj_oracle",
               "rank_oracle": "rank_oracle", "rank_adj_oracle": "rank_adj_oracle"}
    bad = [e for e in estimators if e not in mapping]
    if bad:
        raise NoOracleError(f"no oracle variance for {bad}")
    return run_cell(setting, [mapping[e] for e in estimators], threads)


def normality_diagnostic(setting: SimulationSetting, estimator: str = "rank",
                         threads: int = 1) -> dict:
    """Empirical 2.5%, 50% and 97.5% quantiles of the standardized estimation error.

    The error ``sqrt(N) * (estimate - tau0)`` is divided by the oracle
    asymptotic standard deviation; quantiles near -1.96, 0 and 1.96 indicate
    the normal approximation is adequate.
    """
    if setting.reps < 1000:
        raise ValueError("normality diagnostic needs at least 1000 replications")
    if estimator not in ("rank", "rank_adj"):
        raise NoOracleError(f"no oracle variance for {estimator!r}")
    sd = oracle_sd(setting, adjusted=estimator == "rank_adj")
    rep = run_cell(setting, [estimator], threads)
    pts = rep.points[estimator]
    pts = pts[np.isfinite(pts)]
    zs = math.sqrt(setting.n) * (pts - setting.tau0) / sd
    q = np.quantile(zs, [0.025, 0.5, 0.975])
    return {"estimator": estimator, "q025": float(q[0]), "q50": float(q[1]),
            "q975": float(q[2]), "sd": sd, "reps_used": int(zs.size),
            "exclusions": int(setting.reps - zs.size)}
