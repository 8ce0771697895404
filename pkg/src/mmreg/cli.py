"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 non-convergence under
``--strict``.  Errors are reported on stderr as one JSON line
``{"error": <code>, "message": <text>}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import calibrate, constants_path, format_constants, lookup_c0, lookup_c1
from .diagnostics import (asymptotic_covariance, breakdown_lower_bound,
                          hyperplane_max_count, qq_data)
from .evaluation import (DEFAULT_M_GRID, SCHEMA_VERSION, Scenario, cross_validate,
                         run_simulation)
from .exceptions import MMRegError, UsageError
from .initial import SConfig, s_estimate
from .io import parse_csv
from .mm import MMConfig, mm_fit

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NOCONV = 0, 1, 2, 3


class NotConverged(MMRegError):
    code = "not_converged"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _names(text):
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def _floats(text):
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise UsageError(f"not a comma-separated list of numbers: {text!r}") from None


def _add_data_args(sp):
    sp.add_argument("--input", required=True, help="CSV file with a header row")
    sp.add_argument("--responses", required=True, help="comma-separated response columns")
    sp.add_argument("--predictors", required=True, help="comma-separated predictor columns")
    sp.add_argument("--intercept", action="store_true", help="append a constant predictor")


def _add_fit_args(sp):
    sp.add_argument("--are", type=float, default=0.90, help="target Gaussian efficiency")
    sp.add_argument("--b", type=float, default=0.5)
    sp.add_argument("--c0", type=float, help="override the scale constant")
    sp.add_argument("--c1", type=float, help="override the efficiency constant")
    sp.add_argument("--delta", type=float, default=1e-4)
    sp.add_argument("--max-iters", type=int, default=500)
    sp.add_argument("--subsamples", type=int, default=2000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--strict", action="store_true",
                    help="exit with status 3 if the iterations do not converge")


def build_parser():
    ap = _Parser(prog="mmreg", description="MM-estimation for multivariate linear models")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--output", help="write JSON here instead of stdout")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("fit", help="S + MM fit of a CSV dataset")
    _add_data_args(sp)
    _add_fit_args(sp)

    sp = sub.add_parser("calibrate", help="tuning constants for Gaussian errors")
    sp.add_argument("--q", type=int, default=None)
    sp.add_argument("--are", type=float, default=0.90)
    sp.add_argument("--b", type=float, default=0.5)
    sp.add_argument("--regenerate", action="store_true",
                    help="rewrite the constants file (path from --constants-file)")
    sp.add_argument("--constants-file", default=None)

    sp = sub.add_parser("simulate", help="Monte Carlo contamination study")
    sp.add_argument("--p", type=int, default=2)
    sp.add_argument("--q", type=int, default=2)
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--reps", type=int, default=500)
    sp.add_argument("--contamination", type=float, default=0.0)
    sp.add_argument("--x0", type=float, default=1.0)
    sp.add_argument("--m-grid", default=",".join(str(m) for m in DEFAULT_M_GRID))
    sp.add_argument("--are", type=float, default=0.90)
    sp.add_argument("--subsamples", type=int, default=2000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--csv", help="also write the long-format CSV here")

    sp = sub.add_parser("crossval", help="K-fold prediction errors")
    _add_data_args(sp)
    _add_fit_args(sp)
    sp.add_argument("--folds", type=int, default=5)

    sp = sub.add_parser("diagnose", help="QQ data, standard errors, breakdown bound")
    _add_data_args(sp)
    _add_fit_args(sp)
    sp.add_argument("--qq-csv", help="write QQ plot data here")
    sp.add_argument("--flag-level", type=float, default=0.999)
    return ap


def _mm_config(args, q):
    c0 = args.c0 if args.c0 is not None else lookup_c0(q, args.b)
    c1 = args.c1 if args.c1 is not None else lookup_c1(q, args.are)
    return MMConfig(c0=c0, c1=c1, b=args.b, delta=args.delta, max_iters=args.max_iters)


def _fit(args):
    data, pnames, rnames = parse_csv(args.input, _names(args.responses),
                                     _names(args.predictors), args.intercept)
    cfg = _mm_config(args, data.q)
    init = s_estimate(data, SConfig(n_subsamples=args.subsamples, seed=args.seed),
                      cfg.scale_kernel, cfg.b)
    fit = mm_fit(data, cfg, init)
    if args.strict and not fit.converged:
        raise NotConverged(f"no convergence within {cfg.max_iters} iterations")
    return data, pnames, rnames, cfg, init, fit


def _fit_payload(data, pnames, rnames, cfg, init, fit):
    out = {
        "schema_version": SCHEMA_VERSION,
        "kind": "fit",
        "n": data.n, "p": data.p, "q": data.q,
        "predictors": pnames, "responses": rnames,
        "B": fit.B.tolist(),
        "Sigma": np.asarray(fit.Sigma).tolist(),
        "Gamma": np.asarray(fit.Gamma).tolist(),
        "sigma": fit.sigma,
        "weights": np.asarray(fit.weights).tolist(),
        "distances": np.asarray(fit.distances).tolist(),
        "iterations": fit.iterations,
        "converged": fit.converged,
        "exact_fit": fit.exact_fit,
        "fallback": fit.fallback,
        "objective_trace": list(fit.objective_trace),
        "config": {"c0": cfg.c0, "c1": cfg.c1, "b": cfg.b, "delta": cfg.delta,
                   "max_iters": cfg.max_iters},
        "initial": {"B": init.B.tolist(), "Gamma": init.Gamma.tolist(),
                    "scale": init.scale},
    }
    if not fit.exact_fit:
        cov = asymptotic_covariance(data, fit, cfg.efficiency_kernel)
        out["coef_se"] = cov.standard_errors().tolist()
    return out


def cmd_fit(args):
    return _fit_payload(*_fit(args))


def cmd_calibrate(args):
    if args.regenerate:
        path = Path(args.constants_file) if args.constants_file else constants_path()
        path.write_text(format_constants(b=args.b))
        return {"schema_version": SCHEMA_VERSION, "kind": "constants", "path": str(path)}
    if args.q is None:
        raise UsageError("calibrate needs --q (or --regenerate)")
    r = calibrate(args.q, args.are, args.b)
    return {"schema_version": SCHEMA_VERSION, "kind": "calibration", "q": r.q,
            "b": r.b, "c0": r.c0, "c1": r.c1, "target_are": r.target_are,
            "achieved_are": r.achieved_are}


def cmd_simulate(args):
    sc = Scenario(p=args.p, q=args.q, n=args.n, reps=args.reps,
                  contamination=args.contamination, x0=args.x0,
                  m_grid=_floats(args.m_grid), seed=args.seed, are=args.are,
                  n_subsamples=args.subsamples, threads=args.threads)
    rep = run_simulation(sc)
    if args.csv:
        Path(args.csv).write_text(rep.to_csv_long())
    return rep.to_dict()


def cmd_crossval(args):
    data, pnames, rnames = parse_csv(args.input, _names(args.responses),
                                     _names(args.predictors), args.intercept)
    cfg = _mm_config(args, data.q)
    rep = cross_validate(data, args.folds, cfg, args.seed,
                         SConfig(n_subsamples=args.subsamples, seed=args.seed))
    out = rep.to_dict()
    out["responses"] = rnames
    return out


def cmd_diagnose(args):
    data, pnames, rnames, cfg, init, fit = _fit(args)
    out = _fit_payload(data, pnames, rnames, cfg, init, fit)
    out["kind"] = "diagnose"
    qq = qq_data(fit, data.q, args.flag_level)
    if args.qq_csv:
        qq.to_csv(args.qq_csv)
    out["qq"] = {"threshold": qq.threshold, "flagged": qq.flagged.tolist()}
    try:
        k_n = hyperplane_max_count(data)
    except MMRegError:
        k_n = None
    out["k_n"] = k_n
    if k_n is not None and k_n < data.n / 2:
        out["breakdown_lower_bound"] = breakdown_lower_bound(data.n, k_n, 0.5)
    return out


COMMANDS = {"fit": cmd_fit, "calibrate": cmd_calibrate, "simulate": cmd_simulate,
            "crossval": cmd_crossval, "diagnose": cmd_diagnose}


def _report(exc):
    print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        _report(exc)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        payload = COMMANDS[args.command](args)
    except UsageError as exc:
        _report(exc)
        return EXIT_USAGE
    except NotConverged as exc:
        _report(exc)
        return EXIT_NOCONV
    except (MMRegError, ArithmeticError, np.linalg.LinAlgError) as exc:
        if not isinstance(exc, MMRegError):
            exc.code = "numerical"
        _report(exc)
        return EXIT_DATA
    text = json.dumps(payload, indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main():
    sys.exit(run())
