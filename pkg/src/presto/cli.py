"""Command-line front end: ``presto fit | predict | simulate | verify``.

Exit codes: 0 success, 1 internal error, 2 input error, 3 feasibility error.
Every subcommand accepts ``--config FILE``, a JSON object whose keys are the
long option names (dashes or underscores); explicit flags override it.
The default worker count comes from ``PRESTO_THREADS`` when set.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from dataclasses import replace

import numpy as np

from .estimators import (
    Standardizer,
    cross_validate_presto,
    fit_logistic_rare,
    fit_presto,
    fit_proportional_odds,
)
from .exceptions import (
    DegenerateData,
    FeasibilityRetriesExhausted,
    InfeasibleProbabilities,
    InfeasibleStart,
    PrestoError,
)
from .harness import ExperimentSpec, run_fisher_study, run_split_sample, run_synthetic
from .ordinal import CoefficientSet, Dataset, probability_table
from .synthgen import ScenarioConfig, generate_scenario, write_dataset_csv

SCHEMA_VERSION = 1
LABEL_COLUMN = "y"
THREADS_ENV = "PRESTO_THREADS"
METHOD_KINDS = {"presto": "l1_fused", "presto-l2": "l2_fused"}
HARNESS_METHODS = {"presto": "presto_l1", "presto-l2": "presto_l2",
                   "logistic": "logistic", "propodds": "prop_odds"}


class InputError(Exception):
    """Bad user input; maps to exit code 2."""


def read_csv(path, require_label: bool = True, expected_features=None):
    """Parse a header-first CSV into ``(X, y or None, feature_names)``.

    Numbers are parsed with ``float``/``int``, which ignore the process locale.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise InputError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    has_label = LABEL_COLUMN in header
    if require_label and not has_label:
        raise InputError(f"{path}: missing label column '{LABEL_COLUMN}'")
    features = [h for h in header if h != LABEL_COLUMN]
    if expected_features is not None and features != list(expected_features):
        raise InputError(
            f"{path}: feature columns {features} do not match the model's {list(expected_features)}"
        )
    idx = [header.index(f) for f in features]
    yi = header.index(LABEL_COLUMN) if has_label else None
    X = np.empty((len(body), len(features)))
    y = np.empty(len(body), dtype=np.int64) if has_label else None
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise InputError(f"{path}: data row {i} has {len(row)} fields, expected {len(header)}")
        try:
            X[i] = [float(row[j]) for j in idx]
        except ValueError:
            raise InputError(f"{path}: non-numeric feature value in data row {i}") from None
        if has_label:
            try:
                y[i] = int(row[yi])
            except ValueError:
                raise InputError(f"{path}: label in data row {i} is not an integer") from None
    if not body:
        raise InputError(f"{path} has no data rows")
    return X, y, features


def load_dataset(path, classes=None):
    X, y, names = read_csv(path)
    K = int(classes) if classes else int(y.max())
    if y.min() < 1 or y.max() > K:
        raise InputError(f"{path}: labels must be integers in 1..{K}")
    return Dataset(X, y, K), names


def _fit_diagnostics(fit):
    return {
        "objective": fit.objective,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "kkt_max_violation": fit.kkt_max_violation,
        "separated": fit.separated,
    }


def model_to_dict(method, coeffs: CoefficientSet, names, lam, fit, std=None, cv=None, source_K=None):
    return {
        "schema_version": SCHEMA_VERSION,
        "method": method,
        "K": coeffs.K,
        "source_K": source_K if source_K is not None else coeffs.K,
        "p": coeffs.p,
        "penalty": {"kind": fit.penalty.kind, "lambda": lam},
        "alphas": [float(a) for a in coeffs.alphas],
        "theta": [float(t) for t in coeffs.theta],
        "feature_names": list(names),
        "standardization": (
            {"applied": True, "mean": [float(v) for v in std.mean], "scale": [float(v) for v in std.scale]}
            if std is not None else {"applied": False}
        ),
        "diagnostics": _fit_diagnostics(fit),
        "cv": cv,
    }


def model_from_dict(d):
    if d.get("schema_version") != SCHEMA_VERSION:
        raise InputError(f"unsupported model schema_version {d.get('schema_version')!r}")
    try:
        coeffs = CoefficientSet(np.array(d["alphas"], dtype=float), np.array(d["theta"], dtype=float),
                                int(d["K"]), int(d["p"]))
        return coeffs, list(d["feature_names"])
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"malformed model file: {exc}") from None


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_fit(args) -> int:
    data, names = load_dataset(args.data, args.classes)
    std = Standardizer.from_data(data.X) if args.standardize else None
    cv_info = None
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        if args.method in METHOD_KINDS:
            kind = METHOD_KINDS[args.method]
            if args.lam == "cv":
                report, fit = cross_validate_presto(
                    data, folds=args.folds, seed=args.seed, kind=kind,
                    n_lambdas=args.n_lambdas, standardize=args.standardize,
                )
                lam = report.chosen_lambda
                cv_info = {
                    "lambdas": [float(v) for v in report.lambdas],
                    "mean_oof_brier": [None if not math.isfinite(v) else float(v) for v in report.mean_oof_brier],
                    "chosen_index": report.chosen_index,
                    "folds": report.folds,
                }
                print("lambda            mean_oof_brier")
                for j, (lv, sc) in enumerate(zip(report.lambdas, report.mean_oof_brier)):
                    mark = " *" if j == report.chosen_index else ""
                    print(f"{lv:<17.6e} {sc:.6e}{mark}" if math.isfinite(sc) else f"{lv:<17.6e} nan{mark}")
                print(f"chosen lambda: {lam:.6e}")
            else:
                lam = float(args.lam)
                fit = fit_presto(data, lam, kind=kind, standardize=args.standardize)
        elif args.method == "logistic":
            lam, fit = 0.0, fit_logistic_rare(data, standardize=args.standardize)
        else:
            lam, fit = 0.0, fit_proportional_odds(data, standardize=args.standardize)
    model = model_to_dict(args.method, fit.coeffs, names, lam, fit, std, cv_info, source_K=data.K)
    _write_text(args.out, _dump_json(model))
    print(f"wrote {args.out} (converged={fit.converged})")
    return 0


def cmd_predict(args) -> int:
    try:
        with open(args.model, encoding="utf-8") as fh:
            model = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {args.model}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.model} is not valid JSON: {exc}") from None
    coeffs, names = model_from_dict(model)
    X, _, _ = read_csv(args.data, require_label=False, expected_features=names)
    if args.allow_infeasible:
        P = probability_table(coeffs, X, check=False)
        bad = np.flatnonzero(np.any(P <= 0, axis=1)) if coeffs.K > 2 else np.array([], dtype=int)
        if bad.size:
            print(f"warning: boundaries cross at data rows (0-based): {bad.tolist()}", file=sys.stderr)
    else:
        P = probability_table(coeffs, X, check=True)
    buf = [[f"p{k + 1}" for k in range(coeffs.K)] + ["rare"]]
    buf += [[repr(float(v)) for v in row] + [repr(float(row[-1]))] for row in P]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(buf)
    print(f"wrote {P.shape[0]} rows to {args.out}")
    return 0


def _parse_intercepts(text):
    try:
        return tuple(float(v) for v in str(text).split(","))
    except ValueError:
        raise InputError(f"--intercepts must be comma-separated numbers, got {text!r}") from None


def _methods(text):
    out = []
    for m in str(text).split(","):
        if m not in HARNESS_METHODS:
            raise InputError(f"unknown method {m!r}; choose from {sorted(HARNESS_METHODS)}")
        out.append(HARNESS_METHODS[m])
    return tuple(out)


def _emit(table, args):
    if args.out:
        _write_text(args.out, table.to_json())
    if args.csv:
        _write_text(args.csv, table.to_csv())
    if getattr(args, "table", None):
        _write_text(args.table, table.to_text())
    print(table.to_text(), end="")


def cmd_simulate(args) -> int:
    spec_kw = dict(methods=_methods(args.methods), replications=args.reps, master_seed=args.seed,
                   split_fraction=args.split_fraction, bins=args.bins, folds=args.folds,
                   standardize=args.standardize)
    if args.data:
        data, _ = load_dataset(args.data, args.classes)
        table = run_split_sample(ExperimentSpec(**spec_kw), data, args.rare_class, threads=args.threads)
        _emit(table, args)
        means = table.means()
        best = min(means, key=means.get)
        print(f"lowest mean calibration MSE: {best}")
        return 0
    intercepts = _parse_intercepts(args.intercepts)
    try:
        scenario = ScenarioConfig(n=args.n, p=args.p, K=len(intercepts) + 1, intercepts=intercepts,
                                  regime=args.regime, sparsity_eta=args.eta)
    except ValueError as exc:
        raise InputError(f"invalid scenario: {exc}") from None
    if args.emit_data:
        data, _ = generate_scenario(replace(scenario, seed=args.seed))
        write_dataset_csv(args.emit_data, data)
        print(f"wrote dataset to {args.emit_data}")
        return 0
    table = run_synthetic(ExperimentSpec(scenario=scenario, **spec_kw), threads=args.threads)
    _emit(table, args)
    means = table.means()
    best = min(means, key=means.get)
    print(f"lowest mean MSE: {best}")
    if table.p_values:
        sig = all(v < 0.05 for v in table.p_values.values())
        print(f"all PRESTO-vs-baseline one-tailed p < 0.05: {'yes' if sig else 'no'}")
    return 0


def cmd_verify(args) -> int:
    report = run_fisher_study(args.study, n=args.n, p=args.p, replications=args.reps,
                              master_seed=args.seed, threads=args.threads)
    if args.out:
        _write_text(args.out, report.to_json())
    if args.csv:
        _write_text(args.csv, report.to_csv())
    print(report.to_text(), end="")
    if report.kind == "A":
        eig = [r["min_eigen"] for r in report.rows]
        rhs = min(r["bound_rhs"] for r in report.rows)
        pi = report.rows[0]["pi_rare"]
        print(f"mean min-eigenvalue: {np.mean(eig):.5f}")
        print(f"pi_rare {pi:.4e} {'<=' if pi <= rhs else '>'} bound {rhs:.4e}: "
              f"{'satisfied' if pi <= rhs else 'not satisfied'}")
    else:
        pos = all(r["min_eigen"] > 0 for r in report.rows)
        print(f"every min-eigenvalue positive: {'yes' if pos else 'no'}")
    return 0


def _threads_default():
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        v = int(raw)
    except ValueError:
        return 1
    return max(v, 1)


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _lambda_arg(text):
    if text == "cv":
        return "cv"
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--lambda takes a nonnegative number or 'cv'") from None
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("--lambda must be a finite nonnegative number")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="presto", description="Fused cumulative-logit models for rare ordinal classes.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file of option defaults")
        p.add_argument("--seed", type=int, default=0)

    f = sub.add_parser("fit", help="fit a model to a labelled CSV")
    common(f)
    f.add_argument("data")
    f.add_argument("--method", choices=["presto", "presto-l2", "logistic", "propodds"], default="presto")
    f.add_argument("--lambda", dest="lam", type=_lambda_arg, default="cv")
    f.add_argument("--folds", type=_positive_int, default=5)
    f.add_argument("--n-lambdas", type=_positive_int, default=20)
    f.add_argument("--classes", type=_positive_int, help="number of classes (default: largest label)")
    f.add_argument("--standardize", action="store_true")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="class probabilities for a feature CSV")
    common(pr)
    pr.add_argument("data")
    pr.add_argument("--model", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--allow-infeasible", action="store_true",
                    help="write rows whose boundaries cross instead of failing (probabilities may be <= 0)")
    pr.set_defaults(func=cmd_predict)

    s = sub.add_parser("simulate", help="synthetic or split-sample comparison of methods")
    common(s)
    s.add_argument("--regime", choices=["sparse", "dense"], default="sparse")
    s.add_argument("--eta", type=float, default=0.5)
    s.add_argument("--intercepts", default="0,3.5,5.5")
    s.add_argument("--n", type=_positive_int, default=2500)
    s.add_argument("--p", type=_positive_int, default=10)
    s.add_argument("--reps", type=_positive_int, default=50)
    s.add_argument("--methods", default="presto,logistic,propodds")
    s.add_argument("--folds", type=_positive_int, default=5)
    s.add_argument("--standardize", action="store_true")
    s.add_argument("--data", help="labelled CSV: run the split-sample protocol instead")
    s.add_argument("--classes", type=_positive_int)
    s.add_argument("--rare-class", type=int, help="1 or K (default K)")
    s.add_argument("--split-fraction", type=float, default=0.9)
    s.add_argument("--bins", type=_positive_int, default=10)
    s.add_argument("--emit-data", help="write one generated dataset to this CSV and exit")
    s.add_argument("--threads", type=_positive_int, default=_threads_default())
    s.add_argument("--out", help="summary JSON")
    s.add_argument("--csv", help="per-replication values CSV")
    s.add_argument("--table", help="plain-text summary table")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="Fisher-information eigenvalue condition studies")
    common(v)
    v.add_argument("--study", choices=["A", "B"], required=True)
    v.add_argument("--n", type=_positive_int, default=1_000_000)
    v.add_argument("--p", type=_positive_int, default=10)
    v.add_argument("--reps", type=_positive_int, help="designs (A, default 25) or matrices per cell (B, default 7)")
    v.add_argument("--threads", type=_positive_int, default=_threads_default())
    v.add_argument("--out", help="report JSON")
    v.add_argument("--csv", help="per-matrix rows CSV")
    v.set_defaults(func=cmd_verify)
    return parser


def _apply_config(parser, argv):
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    choices = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in choices), None)
    if not known.config or command is None:
        return parser.parse_args(argv)
    try:
        with open(known.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot load config {known.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise InputError("config file must hold a JSON object")
    subparser = choices[command]
    known_actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, val in cfg.items():
        dest = key.replace("-", "_")
        dest = "lam" if dest == "lambda" else dest
        if dest not in known_actions or dest in ("help", "config", "func"):
            raise InputError(f"unknown config key {key!r}")
        action = known_actions[dest]
        if action.type is not None and not isinstance(val, bool):
            try:
                val = action.type(str(val))
            except argparse.ArgumentTypeError as exc:
                raise InputError(f"config key {key!r}: {exc}") from None
        if action.choices is not None and val not in action.choices:
            raise InputError(f"config key {key!r}: {val!r} is not one of {list(action.choices)}")
        defaults[dest] = val
    subparser.set_defaults(**defaults)
    # a value supplied by the config satisfies a required option; flags still override it
    for a in subparser._actions:
        if a.dest in defaults and a.option_strings:
            a.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleProbabilities as exc:
        rows = getattr(exc, "rows", None)
        where = f"; offending data rows (0-based): {list(map(int, rows))}" if rows is not None else ""
        print(f"feasibility error: {exc}{where}", file=sys.stderr)
        return 3
    except (InfeasibleStart, FeasibilityRetriesExhausted) as exc:
        print(f"feasibility error: {exc}", file=sys.stderr)
        return 3
    except (DegenerateData, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PrestoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
