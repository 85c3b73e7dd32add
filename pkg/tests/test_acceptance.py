"""Acceptance gate: one test per criterion, summarized at the end of the run."""

import json
import math
import time

import numpy as np
import pytest

from conftest import make_toy, record, toy_config
from oracles import brute_lpl, fd_gradient, newton_cox
from rulehaz.boosting import BoostConfig, cox_gradient
from rulehaz.cli import main
from rulehaz.grouplasso import PathConfig, default_weights, kkt_residuals, solve_path
from rulehaz.hte import breslow_baseline, predict_hte
from rulehaz.pipeline import FitConfig, fit_hte_model
from rulehaz.serialize import dumps, model_from_dict
from rulehaz.simulation import (
    MAIN_FUNCTIONS,
    TREAT_FUNCTIONS,
    ScenarioSpec,
    analytic_hte,
    generate,
    run_benchmark,
    simulate_covariates,
    true_hte,
)


def _rel(g, ref):
    # floor keeps exactly-zero gradients (a lone event at the last time) from dividing rounding noise by zero
    return float(np.linalg.norm(g - ref) / max(np.linalg.norm(ref), 1e-4))


def test_criterion_1_gradient_oracle():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 21))
        X = rng.normal(size=(n, 3))
        times = rng.integers(1, 8, n).astype(float) if seed % 2 else rng.exponential(size=n)
        events = rng.binomial(1, 0.7, n)
        events[0] = 1
        beta = rng.normal(size=3) * 0.5
        # derivative of the log partial likelihood in the coefficients
        fd = fd_gradient(lambda b: brute_lpl(times, events, X @ b), beta, h=1e-5)
        g = X.T @ cox_gradient(times, events, X @ beta)
        worst = max(worst, _rel(g, fd))
        # and in the per-subject scores
        eta = X @ beta
        fd_eta = fd_gradient(lambda f: brute_lpl(times, events, f), eta, h=1e-5)
        g_eta = cox_gradient(times, events, eta)
        worst = max(worst, _rel(g_eta, fd_eta))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-5 and elapsed < 10
    record(1, ok, f"max relative error {worst:.2e} (<= 1e-5), {elapsed:.1f}s")
    assert ok


def test_criterion_2_solver_oracle():
    start = time.perf_counter()
    max_dev = 0.0
    max_kkt = 0.0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        p = int(rng.integers(1, 6))
        X = rng.normal(size=(30, p))
        t = rng.exponential(size=30) * np.exp(-0.5 * X[:, 0])
        d = rng.binomial(1, 0.8, 30).astype(float)
        d[0] = 1.0
        groups = [np.array([0])] + [np.arange(j, min(j + 2, p)) for j in range(1, p, 2)]
        w = default_weights(groups)
        zero = solve_path(X, groups, t, d, PathConfig(lambdas=(0.0,)))
        max_dev = max(max_dev, float(np.max(np.abs(zero.coefs[0] - newton_cox(X, t, d)))))
        path = solve_path(X, groups, t, d, PathConfig())
        for lam, beta in zip(path.lambdas, path.coefs):
            max_kkt = max(max_kkt, float(kkt_residuals(X, groups, w, t, d, beta, lam).max()))
    elapsed = time.perf_counter() - start
    ok = max_dev <= 1e-4 and max_kkt <= 1e-6 and elapsed < 60
    record(2, ok, f"max |beta - newton| {max_dev:.2e} (<= 1e-4), max KKT {max_kkt:.2e} (<= 1e-6), {elapsed:.1f}s")
    assert ok


def test_criterion_3_pairing_constraint():
    violations = 0
    pairs = 0
    nonzero = 0
    for seed in range(50):
        data = make_toy(n=120, seed=seed)
        model = fit_hte_model(data, toy_config(seed=seed))
        violations += model.paired_violations()
        a = np.concatenate([model.alpha, model.alpha_star])
        b = np.concatenate([model.beta, model.beta_star])
        pairs += a.size
        nonzero += int(np.sum((a != 0) & (b != 0)))
    record(3, violations == 0, f"{violations} violations over {pairs} pairs in 50 fits ({nonzero} active)")
    assert violations == 0


def test_criterion_4_oracle_vs_analytic():
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = 0.0
    for m in MAIN_FUNCTIONS:
        for tf in TREAT_FUNCTIONS:
            x = simulate_covariates(100, rng)
            mc = true_hte(x, 2.0, m, tf, n_draws=100_000, rng=rng)
            worst = max(worst, float(np.max(np.abs(mc - analytic_hte(x, 2.0, m, tf)))))
    elapsed = time.perf_counter() - start
    ok = worst <= 0.005 and elapsed < 120
    record(4, ok, f"max |MC - analytic| {worst:.4f} (<= 0.005), {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_5_recovery_floor():
    start = time.perf_counter()
    cfg = FitConfig(boost=BoostConfig(num_trees=200))
    res = run_benchmark([ScenarioSpec("M1", "T1", n=1000)], 10, cfg, master_seed=5)
    rows = res.rows
    assert all(r["status"] == "ok" for r in rows)
    rho = float(np.median([r["spearman"] for r in rows]))
    ccr = float(np.median([r["correct_classification"] for r in rows]))
    elapsed = time.perf_counter() - start
    ok = rho >= 0.5 and ccr >= 0.6
    record(5, ok, f"median Spearman {rho:.3f} (>= 0.5), median classification {ccr:.3f} (>= 0.6), {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_criterion_6_null_effect():
    start = time.perf_counter()
    medians = []
    for seed in range(10):
        train = generate(ScenarioSpec("M1", "T0", n=1000), np.random.default_rng([6, seed, 0])).data
        test = generate(ScenarioSpec("M1", "T0", n=1000), np.random.default_rng([6, seed, 1])).data
        model = fit_hte_model(train, FitConfig(boost=BoostConfig(seed=seed), path=PathConfig(seed=seed)))
        medians.append(float(np.median(np.abs(predict_hte(model, test.covariates, 2.0).hte))))
    overall = float(np.median(medians))
    elapsed = time.perf_counter() - start
    ok = overall <= 0.05
    record(6, ok, f"median over seeds of median |hte| {overall:.4f} (<= 0.05), worst seed {max(medians):.4f}, {elapsed:.0f}s")
    assert ok


def test_criterion_7_breslow_and_roundtrip():
    # hand instance: times 1,2,3 with events 1,1,0 and eta = 0
    base = breslow_baseline([1.0, 2.0, 3.0], [1, 1, 0], np.zeros(3))
    hand_ok = base.increments.tolist() == [1 / 3, 1 / 2] and float(base.cumulative(2.0)) == 1 / 3 + 1 / 2
    # brute-force risk-set sums on random tied data
    rng = np.random.default_rng(7)
    t = rng.integers(1, 6, 40).astype(float)
    d = rng.binomial(1, 0.6, 40)
    eta = rng.normal(size=40)
    base = breslow_baseline(t, d, eta)
    brute = [d[t == s].sum() / sum(math.exp(eta[m]) for m in range(40) if t[m] >= s) for s in np.unique(t[d == 1])]
    brute_dev = float(np.max(np.abs(base.increments - brute)))
    data = make_toy(n=150, seed=7)
    model = fit_hte_model(data, toy_config(seed=7))
    back = model_from_dict(json.loads(dumps(model)))
    rt = float(np.max(np.abs(predict_hte(model, data.covariates, 1.0).hte - predict_hte(back, data.covariates, 1.0).hte)))
    ok = hand_ok and brute_dev <= 1e-15 and rt <= 1e-12
    record(7, ok, f"hand instance {'exact' if hand_ok else 'MISMATCH'}, brute-force dev {brute_dev:.1e}, JSON round trip {rt:.1e} (<= 1e-12)")
    assert ok


def test_criterion_8_determinism(tmp_path):
    csv_path = tmp_path / "toy.csv"
    make_toy(n=120, seed=8).to_frame().to_csv(csv_path, index=False, float_format="%.17g")
    fast = ["--trees", "30", "--mean-depth", "3", "--cv-folds", "3", "--n-lambda", "20", "--seed", "8"]
    models = []
    for run in ("a", "b"):
        path = tmp_path / run / "model.json"
        assert main(["fit", "--data", str(csv_path), "--model", str(path), *fast]) == 0
        models.append(path.read_bytes())
    benches = []
    for run in ("a", "b"):
        out = tmp_path / f"bench_{run}"
        args = ["simulate", "--scenario", "M2xT2", "--scenario", "M1xT3", "--n", "200", "--replications", "2",
                "--draws", "5000", "--trees", "30", "--n-lambda", "20", "--cv-folds", "3", "--seed", "8",
                "--out", str(out)]
        assert main(args) == 0
        benches.append((out / "benchmark.csv").read_bytes())
    ok = models[0] == models[1] and benches[0] == benches[1]
    record(8, ok, f"model files identical: {models[0] == models[1]}, benchmark CSVs identical: {benches[0] == benches[1]}")
    assert ok
