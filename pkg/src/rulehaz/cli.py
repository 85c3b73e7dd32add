"""Command-line interface: ``rulehaz {fit,predict,report,simulate,truth}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from .boosting import BoostConfig, ConfigError
from .data import DataError, load_covariates, load_csv
from .grouplasso import PathConfig
from .hte import ExtrapolationWarning, predict_hte
from .interpret import build_report
from .pipeline import FitConfig, fit_hte_model
from .serialize import SchemaError, load_model, save_model
from .simulation import P, ScenarioSpec, analytic_hte, generate, run_benchmark, true_hte

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4

log = logging.getLogger("rulehaz")


class UsageError(Exception):
    pass


def _subsample(value: str):
    v = float(value)
    return int(v) if v.is_integer() and v > 1 else v


def _lambda(value: str):
    return "max" if value == "max" else float(value)


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("RULEHAZ_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise UsageError(f"RULEHAZ_THREADS must be an integer, got {env!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None, help="worker cap (env RULEHAZ_THREADS)")
    common.add_argument("--out", type=Path, default=None, help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    hyper = argparse.ArgumentParser(add_help=False)
    hyper.add_argument("--trees", type=int, default=500)
    hyper.add_argument("--mean-depth", type=float, default=2.0)
    hyper.add_argument("--shrinkage", type=float, default=0.01)
    hyper.add_argument("--subsample", type=_subsample, default=None, help="rows per tree (int) or fraction")
    hyper.add_argument("--lambda", dest="lam", type=_lambda, default=None, help="fixed lambda or 'max'; skips CV")
    hyper.add_argument("--cv-folds", type=int, default=5)
    hyper.add_argument("--n-lambda", type=int, default=100)
    hyper.add_argument("--lambda-min-ratio", type=float, default=1e-3)
    hyper.add_argument("--winsor-q", type=float, default=0.025)

    parser = argparse.ArgumentParser(prog="rulehaz", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common, hyper], help="fit a model from a CSV dataset")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--model", type=Path, default=None, help="model JSON path (default OUT/model.json)")

    p = sub.add_parser("predict", parents=[common], help="predict HTEs for a covariate CSV")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--t0", type=float, default=None, help="horizon (default: 90th percentile of training times)")

    p = sub.add_parser("report", parents=[common], help="rule and variable importance tables")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)

    p = sub.add_parser("simulate", parents=[common, hyper], help="generate scenario data or run the benchmark")
    p.add_argument("--scenario", action="append", required=True, help="e.g. M1xT1; repeatable")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--replications", type=int, default=0, help="0 writes a dataset only")
    p.add_argument("--t0", type=float, default=2.0)
    p.add_argument("--draws", type=int, default=100_000, help="oracle draws per subject")

    p = sub.add_parser("truth", parents=[common], help="Monte-Carlo true HTE for a covariate file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--t0", type=float, default=2.0)
    p.add_argument("--draws", type=int, default=100_000)
    return parser


def fit_config_from_args(args) -> FitConfig:
    return FitConfig(
        boost=BoostConfig(
            num_trees=args.trees,
            mean_depth=args.mean_depth,
            shrinkage=args.shrinkage,
            subsample=args.subsample,
            seed=args.seed,
        ),
        path=PathConfig(
            n_lambda=args.n_lambda,
            lambda_min_ratio=args.lambda_min_ratio,
            cv_folds=args.cv_folds,
            seed=args.seed,
            threads=_threads(args),
        ),
        winsor_q=args.winsor_q,
        lambda_value=args.lam,
    )


def _write(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


def _out_dir(args) -> Path:
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_fit(args) -> int:
    data = load_csv(args.data)
    model = fit_hte_model(data, fit_config_from_args(args))
    if args.model is not None:
        model_path = args.model
        model_path.parent.mkdir(parents=True, exist_ok=True)
    else:
        model_path = _out_dir(args) / "model.json"
    save_model(model, model_path)
    report_path = model_path.with_name(model_path.stem + ".fit_report.json")
    report_path.write_text(json.dumps(model.fit_report, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {model_path}")
    return 0


def prediction_csv(model, X, t0: float) -> str:
    """Rows of (id, hte, s1, s0, extrapolated, covariates...) in input order."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtrapolationWarning)
        pred = predict_hte(model, X, t0)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "hte", "s1", "s0", "extrapolated", *model.feature_names])
    for i in range(X.shape[0]):
        writer.writerow(
            [i + 1, repr(float(pred.hte[i])), repr(float(pred.s1[i])), repr(float(pred.s0[i])),
             int(pred.extrapolated), *(repr(float(v)) for v in X[i])]
        )
    return buf.getvalue()


def cmd_predict(args) -> int:
    model = load_model(args.model)
    X = load_covariates(args.data, model.feature_names)
    t0 = args.t0 if args.t0 is not None else model.fit_report.get("default_t0")
    if t0 is None:
        raise UsageError("--t0 is required for models without a stored default horizon")
    if t0 > model.baseline.max_time:
        log.warning("t0=%g is beyond the last observed time %g; H0 held at its final value", t0, model.baseline.max_time)
    _write(prediction_csv(model, X, float(t0)), args.out)
    return 0


def cmd_report(args) -> int:
    model = load_model(args.model)
    X = load_covariates(args.data, model.feature_names)
    report = build_report(model, X)
    if args.out is not None:
        out = _out_dir(args)
        (out / "rules.csv").write_text(report.rules_csv(), encoding="utf-8")
        (out / "linear_terms.csv").write_text(report.linear_csv(), encoding="utf-8")
        (out / "variables.csv").write_text(report.variables_csv(), encoding="utf-8")
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    sys.stdout.write(report.to_text())
    return 0


def _scenario(name: str, **kw) -> ScenarioSpec:
    try:
        return ScenarioSpec.parse(name, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_simulate(args) -> int:
    specs = [_scenario(s, n=args.n, seed=args.seed, t0=args.t0, oracle_draws=args.draws) for s in args.scenario]
    out = _out_dir(args)
    if args.replications <= 0:
        for spec in specs:
            sim = generate(spec)
            frame = sim.data.to_frame()
            frame.to_csv(out / f"{spec.name}_n{spec.n}_seed{spec.seed}.csv", index=False, float_format="%.17g")
            meta = {
                "scenario": spec.name, "n": spec.n, "seed": spec.seed, "p": P,
                "censoring_fraction": sim.censoring_fraction,
                "t0": spec.t0, "max_followup": spec.max_followup,
            }
            (out / f"{spec.name}_n{spec.n}_seed{spec.seed}.json").write_text(json.dumps(meta, indent=1) + "\n")
            print(f"{spec.name}: {spec.n} rows, censoring fraction {sim.censoring_fraction:.3f}")
        return 0
    result = run_benchmark(specs, args.replications, fit_config_from_args(args), master_seed=args.seed)
    (out / "benchmark.csv").write_text(result.to_csv(), encoding="utf-8")
    (out / "summary.json").write_text(result.summary_json(), encoding="utf-8")
    print(f"wrote {out / 'benchmark.csv'}")
    return 0


def cmd_truth(args) -> int:
    spec = _scenario(args.scenario, t0=args.t0, oracle_draws=args.draws)
    names = [f"x{j + 1}" for j in range(P)]
    X = load_covariates(args.data, names)
    truth = true_hte(X, spec.t0, spec.main_fn, spec.treat_fn, spec.oracle_draws, rng=args.seed)
    exact = analytic_hte(X, spec.t0, spec.main_fn, spec.treat_fn)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "true_hte", "analytic_hte"])
    for i in range(X.shape[0]):
        writer.writerow([i + 1, repr(float(truth[i])), repr(float(exact[i]))])
    _write(buf.getvalue(), args.out)
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "report": cmd_report,
    "simulate": cmd_simulate,
    "truth": cmd_truth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"rulehaz: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, SchemaError, FileNotFoundError) as exc:
        print(f"rulehaz: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"rulehaz: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
