"""Command-line interface: fit, estimate, and simulate subcommands.

Exit codes: 0 success, 2 numerical failure, 3 data error, 64 usage error.
All runs are deterministic given their inputs, flags and seed; the seed
falls back to the VUSNI_SEED environment variable, then to 0.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import load_csv, standardize
from .errors import (
    AggregateConvergenceFailure,
    DataError,
    EstimationError,
    FitError,
    InsufficientData,
    SingularInformation,
    VusniError,
)
from .estimators import (
    METHODS,
    bootstrap_se_nonparametric,
    vus_estimate,
    vus_nonparametric,
)
from .fit import FitOptions, fit, lrt_ignorability
from .inference import confidence_interval
from .simulation import builtin_scenario, run_mc

EXIT_OK = 0
EXIT_NUMERICAL = 2
EXIT_DATA = 3
EXIT_USAGE = 64

CLI_METHODS = METHODS + ("nonparametric",)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_seed(value):
    if value is not None:
        return value
    env = os.environ.get("VUSNI_SEED")
    return int(env) if env else 0


def _fit_options(args, constrain_mar=None) -> FitOptions:
    return FitOptions(
        constrain_mar=args.constrain_mar if constrain_mar is None else constrain_mar,
        restarts=args.restarts,
        seed=_default_seed(args.seed),
        tol=args.tol,
        max_iter=args.max_iter,
    )


def _load(args):
    data = load_csv(args.input)
    transform = None
    if args.standardize:
        data, transform = standardize(data)
    return data, transform


def _write_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _add_common_fit_flags(sub):
    sub.add_argument("--input", required=True, help="input CSV (columns t, a1..ap, v, d)")
    sub.add_argument("--output", default=None, help="output JSON path (default stdout)")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--restarts", type=int, default=5)
    sub.add_argument("--tol", type=float, default=1e-6)
    sub.add_argument("--max-iter", type=int, default=500, dest="max_iter")
    sub.add_argument("--constrain-mar", action="store_true", dest="constrain_mar",
                     help="fix lambda at (0, 0)")
    sub.add_argument("--standardize", action="store_true",
                     help="standardize t and covariates before fitting")


def cmd_fit(args) -> int:
    try:
        data, transform = _load(args)
    except (OSError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        result = fit(data, _fit_options(args))
    except InsufficientData as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    payload = result.to_json_dict()
    if transform is not None:
        payload["standardization"] = transform.to_dict()
    _write_json(payload, args.output)
    print(
        f"converged: grad_norm={result.grad_norm:.2e}, loglik={result.loglik:.4f}, "
        f"cond={result.cond:.2e}",
        file=sys.stderr,
    )
    if result.identifiability_warning:
        print(f"warning: {result.identifiability_warning}", file=sys.stderr)
    return EXIT_OK


def _estimate_payload(args, data, transform) -> tuple[dict, int]:
    methods = [m.strip().lower() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in CLI_METHODS]
    if unknown:
        raise ValueError(f"unknown methods: {', '.join(unknown)}")
    fully_verified = bool(np.all(data.v == 1))
    payload: dict = {"n": data.n, "p": data.p, "estimates": {}, "errors": {}}
    if transform is not None:
        payload["standardization"] = transform.to_dict()

    model_methods = [m for m in methods if m != "nonparametric"]
    model_fit = None
    if model_methods or args.with_lrt:
        constrain = args.constrain_mar or fully_verified
        if fully_verified and not args.constrain_mar:
            payload["notes"] = [
                "data are fully verified, so lambda is not estimable; "
                "the fit constrains lambda to (0, 0)"
            ]
        try:
            model_fit = fit(data, _fit_options(args, constrain_mar=constrain))
            payload["fit"] = model_fit.to_json_dict()
        except FitError as exc:
            for m in model_methods:
                payload["errors"][m] = f"{type(exc).__name__}: {exc}"
            model_methods = []

    for m in methods:
        try:
            if m == "nonparametric":
                mu = vus_nonparametric(data)
                se = bootstrap_se_nonparametric(
                    data, reps=args.bootstrap_reps, seed=_default_seed(args.seed)
                )
                ci = confidence_interval(mu, se, args.level)
                payload["estimates"][m] = {
                    "method": m,
                    "mu_hat": mu,
                    "se": se,
                    "ci": [ci[0], ci[1]],
                    "level": args.level,
                    "se_kind": "bootstrap",
                    "bootstrap_reps": args.bootstrap_reps,
                }
            elif model_fit is not None:
                est = vus_estimate(m, data, model_fit, level=args.level)
                payload["estimates"][m] = est.to_json_dict()
        except (EstimationError, SingularInformation, ValueError) as exc:
            payload["errors"][m] = f"{type(exc).__name__}: {exc}"

    status = EXIT_OK
    if args.with_lrt:
        if fully_verified:
            payload["errors"]["lrt"] = "LRT needs unverified subjects"
        else:
            try:
                lrt = lrt_ignorability(data, _fit_options(args, constrain_mar=False))
                payload["lrt"] = lrt.to_json_dict()
            except FitError as exc:
                payload["errors"]["lrt"] = f"{type(exc).__name__}: {exc}"
    if not payload["estimates"] and payload["errors"]:
        status = EXIT_NUMERICAL
    return payload, status


def cmd_estimate(args) -> int:
    if not 0.0 < args.level < 1.0:
        print("error: --level must be in (0, 1)", file=sys.stderr)
        return EXIT_USAGE
    try:
        data, transform = _load(args)
    except (OSError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        payload, status = _estimate_payload(args, data, transform)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InsufficientData as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    _write_json(payload, args.output)
    for m, msg in payload["errors"].items():
        print(f"{m}: {msg}", file=sys.stderr)
    return status


def cmd_simulate(args) -> int:
    if args.reps < 1:
        print("error: --reps must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    if args.n < 3:
        print("error: --n must be >= 3", file=sys.stderr)
        return EXIT_USAGE
    methods = [m.strip().lower() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        print(f"error: unknown methods: {', '.join(unknown)}", file=sys.stderr)
        return EXIT_USAGE
    try:
        spec = builtin_scenario(args.scenario)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    try:
        report = run_mc(
            spec,
            n=args.n,
            reps=args.reps,
            methods=methods,
            seed=_default_seed(args.seed),
            jobs=args.jobs,
            level=args.level,
            restarts=args.restarts,
            tol=args.tol,
            max_iter=args.max_iter,
            constrain_mar=args.constrain_mar,
        )
    except AggregateConvergenceFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        report = exc.report
        status = EXIT_NUMERICAL
    if report is not None:
        report.write_summary_csv(outdir / "summary.csv")
        report.write_params_csv(outdir / "params.csv")
        report.write_raw_csv(outdir / "raw.csv")
        print(report.format_summary_table())
    return status


def build_parser() -> _Parser:
    parser = _Parser(prog="vusni", description=__doc__)
    parser.add_argument("--version", action="version", version=f"vusni {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit the joint verification/disease model")
    _add_common_fit_flags(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_est = sub.add_parser("estimate", help="bias-corrected VUS estimates")
    _add_common_fit_flags(p_est)
    p_est.add_argument("--methods", default="fi,msi,ipw,pdr",
                       help=f"comma list from {{{','.join(CLI_METHODS)}}}")
    p_est.add_argument("--level", type=float, default=0.95)
    p_est.add_argument("--with-lrt", action="store_true", dest="with_lrt",
                       help="include the ignorability likelihood-ratio test")
    p_est.add_argument("--bootstrap-reps", type=int, default=250, dest="bootstrap_reps",
                       help="bootstrap replicates for the nonparametric se")
    p_est.set_defaults(func=cmd_estimate)

    p_sim = sub.add_parser("simulate", help="Monte Carlo study on a built-in scenario")
    p_sim.add_argument("--scenario", required=True, help="1 or 2 (also I / II)")
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--reps", type=int, required=True)
    p_sim.add_argument("--methods", default="fi,msi,ipw,pdr")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--jobs", type=int, default=1)
    p_sim.add_argument("--level", type=float, default=0.95)
    p_sim.add_argument("--restarts", type=int, default=5)
    p_sim.add_argument("--tol", type=float, default=1e-6)
    p_sim.add_argument("--max-iter", type=int, default=500, dest="max_iter")
    p_sim.add_argument("--constrain-mar", action="store_true", dest="constrain_mar")
    p_sim.add_argument("--output-dir", required=True, dest="output_dir")
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VusniError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
