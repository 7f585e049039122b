"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line; the lines are repeated in
the terminal summary.  Run alone with ``pytest tests/test_acceptance.py -s``
or ``python tests/test_acceptance.py``.  Criteria 5 and 6 take about ten
minutes each on one core.
"""

import json
import time
from dataclasses import replace

import numpy as np
import pytest

import oracles
from conftest import sample_po_data
from presto import Dataset
from presto.cli import main as cli_main
from presto.estimators import fit_presto, fit_proportional_odds
from presto.evaluation import binned_calibration_mse, brier_score, paired_t_test_one_tailed
from presto.harness import ExperimentSpec, run_fisher_study, run_synthetic
from presto.ordinal import (
    CoefficientSet,
    empirical_cumulative_logits,
    negative_log_likelihood,
    nll_gradient,
    probability_table,
)
from presto.solver import SolverOptions, find_lambda_max, lambda_path
from presto.synthgen import ScenarioConfig, generate_scenario, replication_seed

RESULTS = []
TIGHT = SolverOptions(tol=1e-12, kkt_tol=1e-8)
SPARSE = ScenarioConfig(n=2500, p=10, K=4, intercepts=(0.0, 3.5, 5.5), regime="sparse", sparsity_eta=0.5)
DENSE = ScenarioConfig(n=2500, p=10, K=4, intercepts=(0.0, 2.5, 4.5), regime="dense")


def record(num, title, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'}  [{num:>2}] {title}: {detail}"
    print("\n" + line)
    RESULTS.append(line)
    assert passed, line


def _instance(rng, n, p, K, nonparallel=0.3):
    while True:
        X, y = sample_po_data(rng, n, p, K, nonparallel=nonparallel)
        if np.unique(y).size == K:
            return Dataset(X, y, K)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    done = 0
    while done < 100:
        n, p, K = int(rng.integers(5, 51)), int(rng.integers(1, 6)), int(rng.integers(2, 6))
        X = rng.normal(size=(n, p))
        y = rng.integers(1, K + 1, size=n)
        alphas = np.sort(rng.normal(size=K - 1) * 1.5)
        c = CoefficientSet(alphas, rng.normal(size=(K - 1) * p) * 0.3, K, p)
        if np.any(probability_table(c, X, check=False) <= 0) or np.any(np.diff(alphas) <= 0):
            continue
        d = Dataset(X, y, K)
        ga, gt = nll_gradient(c, d)
        g = np.r_[ga, gt]
        f = lambda v: negative_log_likelihood(CoefficientSet(v[:K - 1], v[K - 1:], K, p), d)
        fd = oracles.central_difference(f, np.r_[c.alphas, c.theta], h=1e-6)
        worst = max(worst, np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12))
        done += 1
    elapsed = time.perf_counter() - t0
    record(1, "gradient vs central differences", worst <= 1e-5 and elapsed < 10,
           f"100 instances, max relative error {worst:.2e} (<= 1e-05), {elapsed:.1f}s (< 10s)")


def test_solver_matches_oracles():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    gap_sub, gap_split, worst_kkt = 0.0, 0.0, 0.0
    for _ in range(20):
        d = _instance(rng, int(rng.integers(30, 61)), int(rng.integers(1, 4)), 3)
        lam = float(lambda_path(d)[rng.integers(3, 15)])
        fit = fit_presto(d, lam)
        a0 = empirical_cumulative_logits(d)
        _, sub = oracles.projected_subgradient(d.X, d.y, 3, lam, a0, iters=20000)
        _, _, split = oracles.l1_split_oracle(d.X, d.y, 3, lam, a0)
        gap_sub = max(gap_sub, abs(fit.objective - sub))
        gap_split = max(gap_split, abs(fit.objective - split))
        worst_kkt = max(worst_kkt, fit.kkt_max_violation)
    elapsed = time.perf_counter() - t0
    ok = gap_sub <= 1e-6 and gap_split <= 1e-6 and worst_kkt <= 1e-4 and elapsed < 120
    record(2, "solver optimality", ok,
           f"20 instances, |obj - subgradient oracle| max {gap_sub:.2e}, |obj - L-BFGS-B split oracle| "
           f"max {gap_split:.2e} (<= 1e-06), KKT max {worst_kkt:.2e} (<= 1e-04), {elapsed:.1f}s (< 120s)")


def test_limit_behaviors():
    rng = np.random.default_rng(303)
    theta_max, alpha_gap, zero_gap, par_gap = 0.0, 0.0, 0.0, 0.0
    for K in (3, 4, 3, 4, 3):
        d = _instance(rng, 200, int(rng.integers(1, 4)), K)
        top = fit_presto(d, find_lambda_max(d))
        theta_max = max(theta_max, np.max(np.abs(top.coeffs.theta)))
        alpha_gap = max(alpha_gap, np.max(np.abs(top.coeffs.alphas - empirical_cumulative_logits(d))))

        zero = fit_presto(d, 0.0, opts=TIGHT)
        a, B = oracles.newton_mle(d.X, d.y, K, parallel=False)
        zero_gap = max(zero_gap, np.max(np.abs(np.r_[zero.coeffs.alphas - a,
                                                     zero.coeffs.theta - oracles.theta_from_B(B)])))

        par = fit_proportional_odds(d, opts=TIGHT)
        a, beta = oracles.newton_mle(d.X, d.y, K, parallel=True)
        par_gap = max(par_gap, np.max(np.abs(np.r_[par.coeffs.alphas - a, par.coeffs.betas[:, 0] - beta])))
    ok = theta_max <= 1e-8 and alpha_gap <= 1e-6 and zero_gap <= 1e-5 and par_gap <= 1e-5
    record(3, "limit behaviors", ok,
           f"lambda_max |theta|_inf {theta_max:.1e} (<= 1e-08), intercepts vs empirical logits {alpha_gap:.1e} "
           f"(<= 1e-06), lambda=0 vs Newton {zero_gap:.1e} (<= 1e-05), parallel vs Newton {par_gap:.1e} (<= 1e-05)")


def test_scenario_rare_fractions():
    t0 = time.perf_counter()
    means = {}
    for name, cfg in (("sparse", SPARSE), ("dense", DENSE)):
        fr = [np.mean(d.y == 4) for d, _ in (generate_scenario(replace(cfg, seed=replication_seed(0, r)))
                                             for r in range(200))]
        means[name] = 100 * float(np.mean(fr))
    elapsed = time.perf_counter() - t0
    ok = abs(means["sparse"] - 0.71) <= 0.15 and abs(means["dense"] - 1.60) <= 0.15 and elapsed < 60
    record(4, "scenario rare-class fractions", ok,
           f"sparse {means['sparse']:.3f}% (0.71 +- 0.15), dense {means['dense']:.3f}% (1.60 +- 0.15), "
           f"{elapsed:.1f}s (< 60s)")


_TABLES = {}


def _table(name, scenario):
    if name not in _TABLES:
        t0 = time.perf_counter()
        table = run_synthetic(ExperimentSpec(scenario=scenario, replications=50, master_seed=0))
        _TABLES[name] = (table, time.perf_counter() - t0)
    return _TABLES[name]


def _headline(num, name, scenario):
    table, elapsed = _table(name, scenario)
    m, pv = table.means(), table.p_values
    chosen = [r["presto_l1"]["chosen_index"] for r in table.diagnostics["per_replication"]]
    interior = np.mean([0 < c < 19 for c in chosen])
    ok = (m["presto_l1"] < m["logistic"] and m["presto_l1"] < m["prop_odds"]
          and pv["presto_l1 < logistic"] < 0.05 and pv["presto_l1 < prop_odds"] < 0.05
          and elapsed < 1800)
    record(num, f"headline comparison, {name} regime", ok,
           f"{table.n_success}/50 reps, mean MSE presto {m['presto_l1']:.3e} logistic {m['logistic']:.3e} "
           f"propodds {m['prop_odds']:.3e}, p vs logistic {pv['presto_l1 < logistic']:.2e}, "
           f"p vs propodds {pv['presto_l1 < prop_odds']:.2e} (< 0.05), interior lambda in "
           f"{100 * interior:.0f}% of reps, {elapsed / 60:.1f} min (< 30 min)")


@pytest.mark.slow
def test_headline_sparse():
    _headline(5, "sparse", SPARSE)


@pytest.mark.slow
def test_headline_dense():
    _headline(6, "dense", DENSE)


@pytest.mark.slow
def test_cv_lambda_mostly_interior():
    # not a numbered criterion: the CV example asks for an interior choice in most sparse replications
    table, _ = _table("sparse", SPARSE)
    chosen = [r["presto_l1"]["chosen_index"] for r in table.diagnostics["per_replication"]]
    interior = sum(0 < c < 19 for c in chosen)
    print(f"\ninterior chosen lambda in {interior}/{len(chosen)} sparse replications")
    assert interior > len(chosen) / 2


def test_fisher_study_a():
    t0 = time.perf_counter()
    rep = run_fisher_study("A", n=1_000_000, replications=5)
    elapsed = time.perf_counter() - t0
    eig = np.array([r["min_eigen"] for r in rep.rows])
    rhs = np.array([r["bound_rhs"] for r in rep.rows])
    pi = rep.rows[0]["pi_rare"]
    ok = (0.0230 <= eig.mean() <= 0.0242 and abs(pi - 4.54e-5) <= 5e-8
          and abs(rhs.mean() - 1.5e-4) <= 5e-6 and np.all(pi <= rhs) and elapsed < 300)
    record(7, "Fisher study A", ok,
           f"mean min-eigenvalue {eig.mean():.5f} in [0.0230, 0.0242], left side {pi:.3e} (4.54e-05) <= "
           f"right side {rhs.mean():.3e} (~1.5e-04, min {rhs.min():.3e}), {elapsed:.1f}s (< 300s)")


def test_fisher_study_b():
    t0 = time.perf_counter()
    rep = run_fisher_study("B", n=100_000, replications=3)
    elapsed = time.perf_counter() - t0
    bad = []
    for key, cell in rep.summary().items():
        want = 0.0 if key.endswith("pi_rare=1e-05") else 1.0
        if cell["satisfied_proportion"] != want:
            bad.append(key)
    pos = all(r["min_eigen"] > 0 for r in rep.rows)
    ok = not bad and pos and len(rep.summary()) == 16 and elapsed < 600
    record(8, "Fisher study B", ok,
           f"16 cells x 3 matrices, cells off target: {bad or 'none'}, every min-eigenvalue positive: {pos}, "
           f"min {min(r['min_eigen'] for r in rep.rows):.4f}, {elapsed:.1f}s (< 600s)")


def test_metric_hand_cases():
    bcm = binned_calibration_mse([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1], bins=2)
    P = np.array([[0.5, 0.3, 0.2], [0.1, 0.1, 0.8]])
    brier = brier_score(P, [1, 3])
    rng = np.random.default_rng(909)
    sym = 0.0
    for _ in range(50):
        a, b = rng.normal(size=12), rng.normal(size=12)
        sym = max(sym, abs(paired_t_test_one_tailed(a, b) + paired_t_test_one_tailed(b, a) - 1.0))
    ok = abs(bcm - 0.025) <= 1e-12 and abs(brier - 0.125) <= 1e-12 and sym <= 1e-12
    record(9, "metric hand cases", ok,
           f"binned calibration MSE {bcm!r} (0.025), Brier {brier!r} (0.125), "
           f"max |p(a,b) + p(b,a) - 1| {sym:.1e} (<= 1e-12)")


def test_determinism_across_threads(tmp_path):
    outputs = {}
    for threads in (1, 2, 1):
        d = tmp_path / f"t{threads}_{len(outputs)}"
        d.mkdir()
        data = d / "data.csv"
        rcs = [
            cli_main(["simulate", "--n", "600", "--p", "3", "--intercepts", "0,2", "--reps", "3",
                      "--seed", "17", "--threads", str(threads), "--out", str(d / "syn.json"),
                      "--csv", str(d / "syn.csv"), "--table", str(d / "syn.txt")]),
            cli_main(["simulate", "--n", "500", "--p", "3", "--intercepts=-0.5,0.5", "--seed", "3",
                      "--emit-data", str(data)]),
            cli_main(["simulate", "--data", str(data), "--reps", "3", "--seed", "17",
                      "--threads", str(threads), "--out", str(d / "split.json"), "--csv", str(d / "split.csv")]),
            cli_main(["verify", "--study", "B", "--n", "5000", "--reps", "2", "--seed", "17",
                      "--threads", str(threads), "--out", str(d / "fisher.json"), "--csv", str(d / "fisher.csv")]),
        ]
        assert rcs == [0, 0, 0, 0]
        outputs[d.name] = {f.name: f.read_bytes() for f in sorted(d.iterdir())}
    runs = list(outputs.values())
    same = all(r == runs[0] for r in runs[1:])
    record(10, "determinism across thread counts", same,
           f"{len(runs[0])} result files x 3 runs (threads 1, 2, 1), byte-identical: {same}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-s", "-q"]))
