"""Multi-replication experiments and their summary tables.

Every replication draws from its own substream ``replication_seed(master, r)``,
so results do not depend on how replications are scheduled.  Aggregation
always walks replications in index order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .estimators import (
    cross_validate_presto,
    fit_logistic_rare,
    fit_proportional_odds,
)
from .evaluation import binned_calibration_mse, paired_t_test_one_tailed, rare_prob_mse
from .exceptions import (
    DidNotConverge,
    ExperimentAborted,
    PrestoError,
    Separation,
    SplitRetriesExhausted,
)
from .fisher import (
    box_norm_bound,
    fisher_blocks_plugin,
    gen_truncated_gaussian_design,
    last_intercept_for_rare,
    sup_rare_probability,
    theorem3_condition,
)
from .ordinal import Dataset, rare_class_probability
from .synthgen import ScenarioConfig, generate_scenario, replication_seed

METHODS = ("presto_l1", "presto_l2", "logistic", "prop_odds")
PRESTO_METHODS = ("presto_l1", "presto_l2")
MAX_SPLIT_DRAWS = 100


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: ScenarioConfig | None = None
    methods: tuple = ("presto_l1", "logistic", "prop_odds")
    replications: int = 50
    master_seed: int = 0
    split_fraction: float = 0.9
    bins: int = 10
    folds: int = 5
    n_lambdas: int = 20
    standardize: bool = False
    max_failure_fraction: float = 0.05

    def __post_init__(self):
        methods = tuple(self.methods)
        object.__setattr__(self, "methods", methods)
        if not methods or any(m not in METHODS for m in methods):
            raise ValueError(f"methods must be a nonempty subset of {METHODS}")
        if len(set(methods)) != len(methods):
            raise ValueError("duplicate method names")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not (0 < self.split_fraction < 1):
            raise ValueError("split_fraction must lie in (0, 1)")
        if self.bins < 1:
            raise ValueError("bins must be at least 1")


@dataclass
class SummaryTable:
    """Per-method replication values with means, standard errors and p-values.

    ``p_values`` maps ``"<presto method> < <baseline>"`` to the one-tailed
    paired p-value; it is ``None`` in split-sample mode or with fewer than two
    successful replications.
    """

    mode: str
    metric: str
    methods: tuple
    replication_ids: list
    values: dict
    failures: list = field(default_factory=list)
    p_values: dict | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_success(self) -> int:
        return len(self.replication_ids)

    def means(self) -> dict:
        return {m: float(np.mean(self.values[m])) if self.values[m] else math.nan for m in self.methods}

    def standard_errors(self) -> dict:
        r = self.n_success
        if r < 2:
            return {m: None for m in self.methods}
        return {m: float(np.std(self.values[m], ddof=1) / math.sqrt(r)) for m in self.methods}

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "metric": self.metric,
            "methods": list(self.methods),
            "replications_succeeded": self.n_success,
            "replications_failed": len(self.failures),
            "mean": self.means(),
            "standard_error": self.standard_errors(),
            "p_values": self.p_values,
            "replication_ids": list(self.replication_ids),
            "values": {m: list(self.values[m]) for m in self.methods},
            "failures": [{"replication": r, "error": msg} for r, msg in self.failures],
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n"

    def to_text(self) -> str:
        means, ses = self.means(), self.standard_errors()
        rows = [("method", "mean", "se")]
        for m in self.methods:
            se = "-" if ses[m] is None else f"{ses[m]:.3e}"
            rows.append((m, f"{means[m]:.3e}", se))
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
        lines.append(f"replications: {self.n_success} ok, {len(self.failures)} failed")
        if self.p_values:
            for key, pv in self.p_values.items():
                lines.append(f"p({key}) = {pv:.3e}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replication", *self.methods])
        for i, r in enumerate(self.replication_ids):
            w.writerow([r, *(repr(self.values[m][i]) for m in self.methods)])
        return buf.getvalue()


def _pool_map(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _fit_rare_probabilities(method: str, train: Dataset, X_eval, cv_seed, spec: ExperimentSpec):
    """Rare-class probability estimates on ``X_eval`` plus per-method diagnostics."""
    info = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DidNotConverge)
        warnings.simplefilter("ignore", Separation)
        if method in PRESTO_METHODS:
            kind = "l1_fused" if method == "presto_l1" else "l2_fused"
            report, fit = cross_validate_presto(
                train, folds=spec.folds, seed=cv_seed, kind=kind,
                n_lambdas=spec.n_lambdas, standardize=spec.standardize,
            )
            info["chosen_index"] = report.chosen_index
        elif method == "logistic":
            fit = fit_logistic_rare(train, standardize=spec.standardize)
            info["separated"] = fit.separated
        else:
            fit = fit_proportional_odds(train, standardize=spec.standardize)
    info["converged"] = fit.converged
    return rare_class_probability(fit.coeffs, X_eval), info


def _synthetic_replication(args):
    spec, r = args
    data_ss, cv_ss = replication_seed(spec.master_seed, r).spawn(2)
    try:
        data, truth = generate_scenario(replace(spec.scenario, seed=data_ss))
        truth_rare = truth.true_pi[:, -1]
        values, info = {}, {"rare_fraction": float(np.mean(data.y == data.K))}
        for m in spec.methods:
            est, minfo = _fit_rare_probabilities(m, data, data.X, cv_ss, spec)
            values[m] = rare_prob_mse(est, truth_rare)
            info[m] = minfo
        return r, values, info, None
    except (PrestoError, ValueError, np.linalg.LinAlgError) as exc:
        return r, None, None, f"{type(exc).__name__}: {exc}"


def _split(data: Dataset, fraction: float, rng):
    n_train = int(round(fraction * data.n))
    if not (0 < n_train < data.n):
        raise ValueError("split leaves an empty training or test set")
    for _ in range(MAX_SPLIT_DRAWS):
        perm = rng.permutation(data.n)
        tr, te = np.sort(perm[:n_train]), np.sort(perm[n_train:])
        if np.unique(data.y[tr]).size == data.K and np.unique(data.y[te]).size == data.K:
            return data.subset(tr), data.subset(te)
    raise SplitRetriesExhausted(
        f"no split with every class on both sides after {MAX_SPLIT_DRAWS} draws"
    )


def _split_replication(args):
    spec, data, r = args
    split_ss, cv_ss = replication_seed(spec.master_seed, r).spawn(2)
    try:
        train, test = _split(data, spec.split_fraction, np.random.default_rng(split_ss))
        labels = (test.y == test.K).astype(float)
        values, info = {}, {}
        for m in spec.methods:
            est, minfo = _fit_rare_probabilities(m, train, test.X, cv_ss, spec)
            values[m] = binned_calibration_mse(est, labels, spec.bins)
            info[m] = minfo
        return r, values, info, None
    except SplitRetriesExhausted:
        raise
    except (PrestoError, ValueError, np.linalg.LinAlgError) as exc:
        return r, None, None, f"{type(exc).__name__}: {exc}"


def _collect(spec: ExperimentSpec, results, mode: str, metric: str) -> SummaryTable:
    results = sorted(results, key=lambda t: t[0])
    ids, failures = [], []
    values = {m: [] for m in spec.methods}
    diag = {"per_replication": []}
    for r, vals, info, err in results:
        if err is not None:
            failures.append((r, err))
            continue
        ids.append(r)
        for m in spec.methods:
            values[m].append(float(vals[m]))
        diag["per_replication"].append({"replication": r, **info})
    if len(failures) > spec.max_failure_fraction * spec.replications:
        raise ExperimentAborted(
            f"{len(failures)} of {spec.replications} replications failed; first: {failures[0][1]}"
        )
    table = SummaryTable(mode, metric, spec.methods, ids, values, failures, None, diag)
    if mode == "synthetic" and len(ids) >= 2:
        table.p_values = {}
        for pm in (m for m in spec.methods if m in PRESTO_METHODS):
            for base in (m for m in spec.methods if m not in PRESTO_METHODS):
                table.p_values[f"{pm} < {base}"] = paired_t_test_one_tailed(values[pm], values[base])
    return table


def run_synthetic(spec: ExperimentSpec, threads: int = 1) -> SummaryTable:
    """Rare-class probability MSE against the truth, over ``spec.replications`` scenarios.

    A replication that fails (infeasible coefficients, no valid lambda, ...)
    is excluded for every method and listed in ``failures``; more than
    ``max_failure_fraction`` failures raises :class:`ExperimentAborted`.
    """
    if spec.scenario is None:
        raise ValueError("synthetic mode needs a ScenarioConfig")
    results = _pool_map(_synthetic_replication, [(spec, r) for r in range(spec.replications)], threads)
    return _collect(spec, results, "synthetic", "rare_prob_mse")


def run_split_sample(spec: ExperimentSpec, data: Dataset, rare_class: int | None = None,
                     threads: int = 1) -> SummaryTable:
    """Binned calibration MSE of rare-class estimates over repeated train/test splits.

    ``rare_class`` must be 1 or K.  When it is 1 the label order is reversed
    so the rare category becomes the last one.  No p-values are reported
    because the splits overlap.
    """
    rare_class = data.K if rare_class is None else int(rare_class)
    if rare_class == 1:
        data = Dataset(data.X, data.K + 1 - data.y, data.K)
    elif rare_class != data.K:
        raise ValueError(f"rare_class must be 1 or {data.K}")
    if np.any(data.class_counts() == 0):
        raise ValueError("every class must be represented in the data")
    items = [(spec, data, r) for r in range(spec.replications)]
    results = _pool_map(_split_replication, items, threads)
    table = _collect(spec, results, "split_sample", "binned_calibration_mse")
    table.diagnostics["rare_class"] = rare_class
    return table


@dataclass
class FisherStudyReport:
    """One row per generated matrix (and rarity level) with its eigenvalue check."""

    kind: str
    params: dict
    rows: list

    def summary(self) -> dict:
        out = {}
        for row in self.rows:
            key = f"rho={row['rho']}|pi_rare={row['pi_rare_setting']}"
            out.setdefault(key, []).append(row)
        cells = {}
        for key, rs in out.items():
            eig = [r["min_eigen"] for r in rs]
            cells[key] = {
                "matrices": len(rs),
                "mean_min_eigen": float(np.mean(eig)),
                "min_min_eigen": float(np.min(eig)),
                "se_min_eigen": float(np.std(eig, ddof=1) / math.sqrt(len(eig))) if len(eig) > 1 else None,
                "satisfied_proportion": float(np.mean([r["satisfied"] for r in rs])),
            }
        return cells

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params, "rows": self.rows, "summary": self.summary()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["rho", "pi_rare_setting", "matrix", "min_eigen", "bound_rhs", "pi_rare", "satisfied"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in self.rows:
            w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in cols])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"study {self.kind}"]
        for key, cell in self.summary().items():
            lines.append(
                f"{key}: mean min-eigenvalue {cell['mean_min_eigen']:.5f} over {cell['matrices']} matrices, "
                f"condition satisfied in {cell['satisfied_proportion']:.0%}"
            )
        return "\n".join(lines) + "\n"


def _study_a_one(args):
    n, p, master, r = args
    X = np.random.default_rng(replication_seed(master, r)).uniform(-1.0, 1.0, (n, p))
    alphas, beta = np.array([0.0, 20.0]), np.ones(p)
    rep = theorem3_condition(
        fisher_blocks_plugin(X, alphas, beta), box_norm_bound(p, 1.0),
        sup_rare_probability(alphas, beta, 1.0),
    )
    return {"rho": None, "pi_rare_setting": "alpha2=20", "matrix": r, **rep.to_dict()}


def _study_b_one(args):
    n, p, master, i, rho, m, rarities = args
    X = gen_truncated_gaussian_design(n, p, rho, np.random.SeedSequence(master, spawn_key=(i, m)))
    beta, M = np.ones(p), box_norm_bound(p, 3.0)
    rows = []
    for pr in rarities:
        if pr == 0:
            blocks = fisher_blocks_plugin(X, [0.0, math.inf], beta, rare_limit=True)
        else:
            blocks = fisher_blocks_plugin(X, [0.0, last_intercept_for_rare(pr, beta, 3.0)], beta)
        rep = theorem3_condition(blocks, M, float(pr))
        rows.append({"rho": rho, "pi_rare_setting": float(pr), "matrix": m, **rep.to_dict()})
    return rows


def run_fisher_study(kind: str, n: int | None = None, p: int = 10, replications: int | None = None,
                     rhos=(0.0, 0.25, 0.5, 0.75), rarities=(1e-5, 1e-6, 1e-7, 0.0),
                     master_seed: int = 0, threads: int = 1) -> FisherStudyReport:
    """Eigenvalue-condition study on a uniform (``"A"``) or truncated-Gaussian (``"B"``) design.

    A: ``replications`` (default 25) designs ``U(-1, 1)^p`` with ``beta = 1``,
    ``alphas = (0, 20)``.  B: ``replications`` (default 7) matrices per
    correlation; the rarity levels share each matrix, and ``pi_rare = 0``
    uses the limiting information.
    """
    kind = kind.upper()
    n = int(1e6) if n is None else int(n)
    if kind == "A":
        reps = 25 if replications is None else replications
        rows = _pool_map(_study_a_one, [(n, p, master_seed, r) for r in range(reps)], threads)
        params = {"n": n, "p": p, "replications": reps, "master_seed": master_seed,
                  "alphas": [0.0, 20.0], "beta": "ones"}
    elif kind == "B":
        reps = 7 if replications is None else replications
        items = [(n, p, master_seed, i, float(rho), m, tuple(float(x) for x in rarities))
                 for i, rho in enumerate(rhos) for m in range(reps)]
        rows = [row for chunk in _pool_map(_study_b_one, items, threads) for row in chunk]
        params = {"n": n, "p": p, "matrices": reps, "master_seed": master_seed,
                  "rhos": [float(r) for r in rhos], "rarities": [float(x) for x in rarities],
                  "alpha1": 0.0, "beta": "ones"}
    else:
        raise ValueError("kind must be 'A' or 'B'")
    return FisherStudyReport(kind, params, rows)
