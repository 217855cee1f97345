"""Command line interface.

    pbj analyze  --outcome Y.csv --design X.csv --test group --method holm,pbj-sd --out report.csv
    pbj simulate --n 100 --V 1000 --covariance posAR1 --rho 0.9 --nsims 500 --out fwer.csv
    pbj simulate --preset table-n100 --nsims 100 --out table.txt --format text
    pbj simulate --study injection --base-data regions.csv --sizes 40,100 --out inj.csv

Exit codes: 0 success, 2 invalid input, 3 I/O failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
import warnings

import numpy as np

from . import _rng
from .analysis import DEFAULT_B, AnalysisConfig, analyze
from .errors import NumericalError, ValidationError
from .io import load_matrix
from .simulate import (COVARIANCES, PRESET_V, PRESETS, SYNTHETIC_METHODS, InjectionConfig,
                       SyntheticConfig, run_injection, run_preset, run_synthetic,
                       write_study_table)

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_list(text):
    try:
        return [int(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser():
    p = _Parser(prog="pbj", description="Family-wise error control for mass-univariate linear models")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="adjusted p-values for an outcome matrix")
    a.add_argument("--outcome", required=True, help="n x V outcome matrix (csv, tsv or bin)")
    a.add_argument("--design", required=True, help="n x p design table with a header row")
    a.add_argument("--test", required=True, type=_csv_list,
                   help="comma-separated tested design columns (labels or 0-based indices)")
    a.add_argument("--method", default="pbj-sd", type=_csv_list,
                   help="comma-separated: bonferroni, holm, pbj-ss, pbj-sd, perm-ss, perm-sd")
    a.add_argument("--B", type=int, default=DEFAULT_B, help="bootstrap/permutation replicates")
    a.add_argument("--seed", type=int, default=None)
    a.add_argument("--alpha", type=float, default=0.05)
    a.add_argument("--yeo-johnson", action="store_true",
                   help="Yeo-Johnson transform each location before fitting")
    a.add_argument("--no-intercept", action="store_true")
    a.add_argument("--exhaustive", action="store_true",
                   help="enumerate all n! permutations instead of B random ones")
    a.add_argument("--smooth", action="store_true", help="use (1 + count) / (1 + B) p-values")
    a.add_argument("--threads", type=int, default=1)
    a.add_argument("--out", required=True, help="report CSV path")

    s = sub.add_parser("simulate", help="Monte-Carlo FWER and power study")
    s.add_argument("--study", choices=("synthetic", "injection"), default="synthetic")
    s.add_argument("--preset", default=None, help=f"one of {sorted(PRESETS)}")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--V", type=_int_list, default=None,
                   help="number of locations (comma list allowed with --preset)")
    s.add_argument("--covariance", default="independent", choices=COVARIANCES)
    s.add_argument("--rho", type=float, default=0.9)
    s.add_argument("--effect", type=float, default=0.4)
    s.add_argument("--method", type=_csv_list, default=None)
    s.add_argument("--nsims", type=int, default=500)
    s.add_argument("--B", type=int, default=None)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--base-data", help="injection: n x V matrix to subsample")
    s.add_argument("--covariates", help="injection: n x k covariate table")
    s.add_argument("--sizes", type=_int_list, default=[40, 100, 200, 400])
    s.add_argument("--signal-beta", type=float, default=10.0)
    s.add_argument("--n-signal", type=int, default=3)
    s.add_argument("--test-df", type=int, default=1)
    s.add_argument("--no-yeo-johnson", action="store_true")
    s.add_argument("--format", choices=("csv", "text"), default="csv")
    s.add_argument("--out", required=True)
    return p


def _seed(value):
    if value is not None:
        return value
    seed = _rng.fresh_seed()
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _cmd_analyze(args):
    seed = args.seed
    if seed is None and any(m.startswith(("pbj", "perm")) for m in args.method):
        seed = _seed(None)
    cfg = AnalysisConfig(
        outcome_path=args.outcome, design_path=args.design, tested_columns=args.test,
        methods=args.method, B=args.B, seed=seed, alpha=args.alpha,
        apply_yeo_johnson=args.yeo_johnson, output_path=args.out,
        add_intercept=not args.no_intercept, exhaustive=args.exhaustive,
        smooth=args.smooth, workers=args.threads)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        analyze(cfg)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return EXIT_OK


def _cmd_simulate(args):
    if args.nsims < 1:
        raise ValidationError("--nsims must be >= 1")
    seed = _seed(args.seed)
    if args.study == "injection":
        if not args.base_data:
            raise ValidationError("--base-data is required for the injection study")
        data, _ = load_matrix(args.base_data)
        cov = load_matrix(args.covariates)[0] if args.covariates else None
        kwargs = {}
        if args.method:
            kwargs["methods"] = tuple(args.method)
        cfg = InjectionConfig(base_data=data, covariates=cov, subsample_sizes=tuple(args.sizes),
                              n_signal=args.n_signal, signal_beta=args.signal_beta,
                              test_df=args.test_df, n_sims=args.nsims,
                              B=args.B or 5000, alpha=args.alpha,
                              yeo_johnson=not args.no_yeo_johnson, seed=seed,
                              workers=args.threads, **kwargs)
        result = run_injection(cfg)
    elif args.preset:
        result = run_preset(args.preset, n_sims=args.nsims, B=args.B or 1000, seed=seed,
                            V_values=tuple(args.V or PRESET_V),
                            methods=tuple(args.method or SYNTHETIC_METHODS),
                            workers=args.threads, rho=args.rho)
    else:
        V = args.V or [1000]
        if len(V) != 1:
            raise ValidationError("--V takes a single value without --preset")
        cfg = SyntheticConfig(n=args.n, V=V[0], covariance=args.covariance, rho=args.rho,
                              effect=args.effect, n_sims=args.nsims, B=args.B or 1000,
                              alpha=args.alpha, seed=seed, workers=args.threads,
                              methods=tuple(args.method or SYNTHETIC_METHODS))
        result = run_synthetic(cfg)
    write_study_table(result, args.out, args.format)
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {"analyze": _cmd_analyze, "simulate": _cmd_simulate}[args.command]
    try:
        return handler(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
