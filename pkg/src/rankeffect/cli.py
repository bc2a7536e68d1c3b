"""Command-line interface.

Subcommands: ``analyze``, ``simulate``, ``theory`` and ``randtest``.

Exit codes
----------
0  success; every requested method produced a result
1  some requested methods failed (their rows are blank, the rest are reported)
2  usage error (bad flags or arguments)
3  input data could not be read or parsed
4  numerical failure (degenerate data, zero functional, no bracket, non-monotone
   estimating function, non-convergent integral, empty test-inversion interval)
5  exact enumeration exceeds the configured cap

The default worker count for ``simulate`` comes from ``RANKEFFECT_THREADS``
(falling back to 1).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from .design import AssignmentSpace
from .errors import (
    DataFormatError,
    InvalidExperimentError,
    NonFiniteInputError,
    RankEffectError,
    TooLargeError,
)
from .io import METHODS, AnalysisConfig, DatasetSchema, analyze, load_csv, scale_warning
from .randtest import null_distribution, observed_statistic, p_value, test_inversion_ci
from .simulation import METHODS as SIM_METHODS
from .simulation import ORACLE_METHODS, SimulationSetting, run_cell
from .theory import (
    DensitySpec,
    are_closed_form,
    are_numeric,
    breakdown_point_asymptotic,
    breakdown_point_finite,
    pilot_efficiency_estimate,
)

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_TOO_LARGE = 0, 1, 2, 3, 4, 5
THREADS_ENV = "RANKEFFECT_THREADS"

log = logging.getLogger("rankeffect")


def _default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _common():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=None, help="seed for any Monte Carlo component")
    g.add_argument("--level", type=float, default=0.95, help="confidence level (default 0.95)")
    g.add_argument("--nu", type=float, default=1.0 / 3.0, help="plug-in window exponent in (0, 1/2)")
    g.add_argument("--tie-policy", default="up", help="up, average or random[:SEED]")
    g.add_argument("--threads", type=int, default=None,
                   help=f"worker processes (default ${THREADS_ENV} or 1)")
    g.add_argument("--format", choices=("csv", "json"), default="csv", dest="fmt")
    g.add_argument("--output", "-o", default=None, help="write the report here instead of stdout")
    g.add_argument("--verbose", "-v", action="store_true")
    return p


def _schema_args(p):
    p.add_argument("csv", help="input CSV file")
    p.add_argument("--outcome", default="y", help="outcome column (default y)")
    p.add_argument("--treatment", default="z", help="0/1 treatment column (default z)")
    p.add_argument("--covariates", default="", help="comma-separated covariate columns")
    p.add_argument("--no-header", action="store_true", help="columns are zero-based positions")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="rankeffect", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="estimate the effect from a CSV file")
    _schema_args(a)
    a.add_argument("--methods", default=",".join(METHODS),
                   help=f"comma-separated subset of {','.join(METHODS)}")
    a.add_argument("--plugin-diagonal", action="store_true",
                   help="count self-pairs in the plug-in overlap functionals")

    s = sub.add_parser("simulate", parents=[common], help="run one cell of the coverage study")
    s.add_argument("--setting", type=int, choices=(1, 2, 3), required=True)
    s.add_argument("--error", choices=("normal", "t1", "t3"), default="normal")
    s.add_argument("--prop", type=float, default=0.5)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--reps", type=int, default=1000)
    s.add_argument("--tau0", type=float, default=2.0)
    s.add_argument("--estimators", default=",".join(SIM_METHODS),
                   help=f"comma-separated subset of {','.join(SIM_METHODS + ORACLE_METHODS)}")
    s.add_argument("--plugin-diagonal", action="store_true")

    t = sub.add_parser("theory", parents=[common], help="breakdown points and efficiencies")
    grp = t.add_mutually_exclusive_group(required=True)
    grp.add_argument("--breakdown", type=float, metavar="LAMBDA",
                     help="asymptotic breakdown point at treated fraction LAMBDA")
    grp.add_argument("--breakdown-finite", type=int, nargs=2, metavar=("N", "M"))
    grp.add_argument("--are", metavar="FAMILY",
                     help="normal, uniform, laplace, t3, t:DF, exponential, pareto:ALPHA, epanechnikov")
    grp.add_argument("--pilot", metavar="FILE", help="one-column file of pilot control outcomes")
    t.add_argument("--numeric", action="store_true", help="use quadrature for --are")
    t.add_argument("--column", default=None, help="pilot column name when the file has a header")

    r = sub.add_parser("randtest", parents=[common], help="randomization p-value and inversion interval")
    _schema_args(r)
    r.add_argument("--tau0", type=float, default=0.0)
    r.add_argument("--stat", choices=("wrs", "diff-in-means", "adjusted-wrs"), default="wrs")
    r.add_argument("--mode", choices=("auto", "exact", "monte-carlo"), default="auto")
    r.add_argument("--draws", type=int, default=10_000)
    r.add_argument("--sided", choices=("two", "left", "right"), default="two")
    r.add_argument("--ci", action="store_true", help="also report the test-inversion interval")
    return parser


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _schema(args):
    covs = tuple(c.strip() for c in args.covariates.split(",") if c.strip())
    return DatasetSchema(args.outcome, args.treatment, covs, not args.no_header)


def _cmd_analyze(args):
    exp = load_csv(args.csv, _schema(args))
    msg = scale_warning(exp)
    if msg:
        log.warning(msg)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    config = AnalysisConfig(methods=methods, level=args.level, nu=args.nu,
                            tie_policy=args.tie_policy, seed=args.seed, output_format=args.fmt,
                            plugin_diagonal=args.plugin_diagonal)
    report = analyze(exp, config)
    for method, err in report.errors.items():
        log.error("%s: %s", method, err)
    _emit(report.render(), args.output)
    return EXIT_OK if report.complete else EXIT_PARTIAL


def _cmd_simulate(args):
    setting = SimulationSetting(setting=args.setting, n=args.n, prop=args.prop, tau0=args.tau0,
                                error=args.error, reps=args.reps,
                                base_seed=0 if args.seed is None else args.seed,
                                nu=args.nu, level=args.level,
                                plugin_diagonal=args.plugin_diagonal)
    if args.seed is None:
        log.warning("no --seed given; using 0")
    estimators = [e.strip() for e in args.estimators.split(",") if e.strip()]
    threads = args.threads or _default_threads()
    report = run_cell(setting, estimators, threads=threads)
    log.info("%d replications in %.1f s", setting.reps, report.wall_time)
    _emit(report.to_json() if args.fmt == "json" else report.to_csv(), args.output)
    return EXIT_OK


def _load_pilot(path, column):
    if column is None:
        return np.loadtxt(path, delimiter=",", ndmin=1)
    data = np.genfromtxt(path, delimiter=",", names=True)
    return np.asarray(data[column], dtype=float)


def _cmd_theory(args):
    if args.breakdown is not None:
        value = breakdown_point_asymptotic(args.breakdown)
    elif args.breakdown_finite is not None:
        value = breakdown_point_finite(*args.breakdown_finite)
    elif args.are is not None:
        spec = DensitySpec.parse(args.are)
        value = are_numeric(spec) if args.numeric or spec.kind == "custom" else are_closed_form(spec)
    else:
        try:
            pilot = _load_pilot(args.pilot, args.column)
        except (OSError, ValueError) as exc:
            raise DataFormatError(f"cannot read pilot file: {exc}") from exc
        value = pilot_efficiency_estimate(pilot, args.nu)
    _emit(f"{value:.6f}\n", args.output)
    return EXIT_OK


def _cmd_randtest(args):
    exp = load_csv(args.csv, _schema(args))
    if args.mode == "auto":
        space = AssignmentSpace.auto(exp.n, exp.m, draws=args.draws, seed=args.seed)
    elif args.mode == "exact":
        space = AssignmentSpace(exp.n, exp.m, "exact")
    else:
        space = AssignmentSpace(exp.n, exp.m, "monte-carlo", draws=args.draws, seed=args.seed)
    if space.mode == "monte-carlo" and args.seed is None:
        log.warning("Monte Carlo test without --seed; results will not be reproducible")
    dist = null_distribution(exp, args.tau0, args.stat, space, args.tie_policy)
    obs = observed_statistic(exp, args.tau0, args.stat, args.tie_policy)
    p = p_value(dist, obs, args.sided)
    rows = [("statistic", args.stat), ("tau0", repr(args.tau0)), ("observed", repr(obs)),
            ("mode", dist.mode), ("assignments", str(len(dist))), ("p_value", repr(p))]
    if args.ci:
        lo, hi = test_inversion_ci(exp, args.stat, space, args.level, policy=args.tie_policy)
        rows += [("ci_lo", repr(lo)), ("ci_hi", repr(hi)), ("level", repr(args.level))]
    if args.fmt == "json":
        import json
        text = json.dumps(dict(rows), indent=2) + "\n"
    else:
        text = "key,value\n" + "".join(f"{k},{v}\n" for k, v in rows)
    _emit(text, args.output)
    return EXIT_OK


COMMANDS = {"analyze": _cmd_analyze, "simulate": _cmd_simulate,
            "theory": _cmd_theory, "randtest": _cmd_randtest}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (DataFormatError, InvalidExperimentError, NonFiniteInputError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except TooLargeError as exc:
        log.error("%s", exc)
        return EXIT_TOO_LARGE
    except RankEffectError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
