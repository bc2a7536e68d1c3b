"""CSV ingestion, analysis configuration and report emission."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .design import Experiment
from .errors import DataFormatError, RankEffectError
from .estimators import (
    DEFAULT_SOLVER,
    InversionSolver,
    diff_in_means,
    lin_interaction_estimator,
    ols_adjusted_estimator,
    rosenbaum_adjusted,
    rosenbaum_unadjusted,
)
from .ols import Residualizer
from .ranks import TiePolicy
from .variance import NuConfig, attach_rank_ci, v_hat_plugin, w_hat_plugin

log = logging.getLogger(__name__)

__all__ = [
    "DatasetSchema", "AnalysisConfig", "AnalysisReport", "load_csv", "write_csv",
    "analyze", "scale_warning", "REPORT_COLUMNS",
]

METHODS = ("rank", "dm", "rank_adj", "ols_adj", "lin")
REPORT_COLUMNS = ("method", "estimate", "std_error", "ci_lo", "ci_hi", "length")
LARGE_SCALE_IQR = 100.0


@dataclass(frozen=True)
class DatasetSchema:
    """Column layout of an input CSV.

    Without a header, columns are addressed by zero-based position (given as
    ints or digit strings).
    """

    outcome_col: str
    treatment_col: str
    covariate_cols: tuple = ()
    has_header: bool = True

    def __post_init__(self):
        object.__setattr__(self, "covariate_cols", tuple(self.covariate_cols))


def _column_index(header, name, has_header):
    if has_header:
        if name not in header:
            raise DataFormatError(f"column {name!r} not found; available: {list(header)}")
        return header.index(name)
    try:
        return int(name)
    except (TypeError, ValueError):
        raise DataFormatError(f"without a header, columns are positions; got {name!r}") from None


def load_csv(path, schema: DatasetSchema) -> Experiment:
    """Read an experiment from a CSV file.

    Rows keep file order. Any unparsable cell (non-numeric, non-finite, or a
    treatment other than 0/1) raises :class:`DataFormatError` listing every
    offending line number.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0] if schema.has_header and rows else []
    body = rows[1:] if schema.has_header else rows
    first_line = 2 if schema.has_header else 1
    cols = [_column_index(header, c, schema.has_header)
            for c in (schema.outcome_col, schema.treatment_col, *schema.covariate_cols)]
    y, z, x, bad = [], [], [], []
    for k, row in enumerate(body):
        line = first_line + k
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            cells = [row[c] for c in cols]
            vals = [float(c) for c in cells]
        except (IndexError, ValueError):
            bad.append(line)
            continue
        if not all(math.isfinite(v) for v in vals) or vals[1] not in (0.0, 1.0):
            bad.append(line)
            continue
        y.append(vals[0])
        z.append(int(vals[1]))
        x.append(vals[2:])
    if bad:
        shown = ", ".join(map(str, bad[:20])) + (" ..." if len(bad) > 20 else "")
        raise DataFormatError(f"unparsable cells on line(s) {shown}", rows=bad)
    if not y:
        raise DataFormatError("no data rows")
    m = sum(z)
    if m in (0, len(z)):
        raise DataFormatError(f"treatment is constant ({m} of {len(z)} treated)")
    exp = Experiment(np.array(y), np.array(z), np.array(x) if schema.covariate_cols else None)
    log.info("loaded %s: N=%d, m=%d, p=%d", path, exp.n, exp.m, exp.p)
    return exp


def write_csv(exp: Experiment, path, names: Optional[DatasetSchema] = None) -> DatasetSchema:
    """Write ``exp`` so that :func:`load_csv` with the returned schema restores it bit for bit."""
    covs = tuple(f"x{k + 1}" for k in range(exp.p))
    schema = names or DatasetSchema("y", "z", covs)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([schema.outcome_col, schema.treatment_col, *schema.covariate_cols])
        for i in range(exp.n):
            xs = [repr(float(v)) for v in exp.x[i]] if exp.p else []
            w.writerow([repr(float(exp.y[i])), int(exp.z[i]), *xs])
    return schema


@dataclass(frozen=True)
class AnalysisConfig:
    """Settings for :func:`analyze`.

    ``plugin_diagonal`` controls whether self-pairs enter the plug-in overlap
    functionals of the rank intervals; off by default, see
    :func:`rankeffect.variance.v_hat_plugin`.
    """

    methods: tuple = METHODS
    level: float = 0.95
    nu: float = 1.0 / 3.0
    tie_policy: str = "up"
    solver: InversionSolver = DEFAULT_SOLVER
    seed: Optional[int] = None
    output_format: str = "csv"
    plugin_diagonal: bool = False

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        NuConfig(self.nu)
        TiePolicy.parse(self.tie_policy)
        if self.output_format not in ("csv", "json"):
            raise ValueError("output format must be csv or json")

    def digest(self) -> str:
        d = asdict(self)
        d["solver"] = asdict(self.solver)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


@dataclass
class AnalysisReport:
    rows: list
    config: AnalysisConfig
    n: int
    m: int
    p: int
    errors: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not self.errors

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow([r["method"]] + [_fmt(r[c]) for c in REPORT_COLUMNS[1:]])
        return buf.getvalue()

    def to_json(self) -> str:
        from . import __version__
        doc = {
            "provenance": {"version": __version__, "seed": self.config.seed,
                           "config_sha256": self.config.digest()},
            "data": {"n": self.n, "m": self.m, "p": self.p},
            "level": self.config.level,
            "rows": [{k: (None if isinstance(v, float) and math.isnan(v) else v)
                      for k, v in r.items()} for r in self.rows],
            "errors": self.errors,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def render(self) -> str:
        return self.to_json() if self.config.output_format == "json" else self.to_csv()


def _fmt(v):
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def scale_warning(exp: Experiment) -> Optional[str]:
    """Message suggesting rescaling when the outcome IQR exceeds 100, else ``None``.

    The plug-in window has absolute width ``N ** -nu``, so outcomes measured on
    a very large scale leave almost every window empty.
    """
    q75, q25 = np.percentile(exp.y, [75, 25])
    if q75 - q25 > LARGE_SCALE_IQR:
        return (f"outcome IQR is {q75 - q25:.4g}; consider rescaling the outcome, "
                "since the plug-in standard errors use a fixed-width window")
    return None


def analyze(exp: Experiment, config: AnalysisConfig = AnalysisConfig()) -> AnalysisReport:
    """Estimate, standard error and interval for each configured method.

    A method that fails gets a row of blanks and an entry in ``errors``; the
    remaining methods still run.
    """
    policy = TiePolicy.parse(config.tie_policy)
    n, m, level = exp.n, exp.m, config.level
    rows, errors = [], {}
    for method in config.methods:
        try:
            if method == "rank":
                est = rosenbaum_unadjusted(exp, config.solver, policy)
                f = v_hat_plugin(exp, est.point, config.nu, diagonal=config.plugin_diagonal)
                est = attach_rank_ci(est, f, n, m, level)
            elif method == "rank_adj":
                res = Residualizer(exp.x) if exp.has_covariates else None
                est = rosenbaum_adjusted(exp, config.solver, policy, residualizer=res)
                f = w_hat_plugin(exp, est.point, config.nu, diagonal=config.plugin_diagonal,
                                 residualizer=res)
                est = attach_rank_ci(est, f, n, m, level)
            elif method == "dm":
                est = diff_in_means(exp, level=level)
            elif method == "ols_adj":
                est = ols_adjusted_estimator(exp, level=level)
            else:
                est = lin_interaction_estimator(exp, level=level)
        except (RankEffectError, ValueError) as exc:
            errors[method] = f"{type(exc).__name__}: {exc}"
            rows.append({"method": method, "estimate": math.nan, "std_error": math.nan,
                         "ci_lo": math.nan, "ci_hi": math.nan, "length": math.nan})
            continue
        if est.ci is None:
            errors[method] = est.diagnostics.get("ci_unavailable", "interval unavailable")
        lo, hi = (est.ci[0], est.ci[1]) if est.ci else (math.nan, math.nan)
        rows.append({"method": method, "estimate": est.point,
                     "std_error": math.nan if est.se is None else est.se,
                     "ci_lo": lo, "ci_hi": hi, "length": hi - lo})
    return AnalysisReport(rows, config, n, m, exp.p, errors)
