"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line.

The lines are collected in ``RESULTS`` and printed in the terminal summary
(see ``conftest.py``), so ``pytest tests/test_acceptance.py`` shows them
without ``-s``. Running this file directly does the same.
"""
import csv
import time

import numpy as np
import pytest

from conftest import TOY_SIGMA, TOY_THETA, cov_to_corr, random_cov, toy_price_matrix
from oracles import active_set_qp, lp_value
from pods import cli
from pods.classifier import ClassWeights, ConfusionMatrix, TrainConfig, init_lstm, objective_and_grad, predict_mask, train
from pods.frontier import LambdaSchedule, evaluate, find_max_lambda, lambda_schedule, trace_frontier
from pods.lp_reduction import build_lp, parametric_frontier
from pods.market_data import (
    AssetMask,
    MomentSet,
    ReturnMatrix,
    compute_returns,
    evaluation_window,
    moments,
    reduce_universe,
    split,
    synth_prices,
)
from pods.qp import QpProblem, RiskModel, bench_factorization, solve_markowitz
from pods.sparsifier import complete, is_psd, select_levels, sparsify, sweep, threshold_candidates

RESULTS = {}


def record(n, title, ok, detail):
    RESULTS[n] = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    assert ok, RESULTS[n]


def synth_test_moments(n_assets, n_days, seed=0):
    x = compute_returns(synth_prices(n_assets, n_days, seed=seed))
    _, test = split(x, 0.75)
    hist, realized = evaluation_window(test)
    return moments(hist), realized


def test_criterion_01_worked_example():
    t0 = time.perf_counter()
    m = moments(compute_returns(toy_price_matrix()))
    sig_err = float(np.max(np.abs(m.sigma - TOY_SIGMA)))
    th_err = float(np.max(np.abs(m.theta - TOY_THETA)))
    cand = threshold_candidates(m.theta)
    cand_ok = cand.size == 7 and np.allclose(cand, [0.05, 0.21, 0.38, 0.82, 0.9, 0.93, 1], atol=0.01)
    pattern = [bool(r.psd_raw) for r in sweep(m.sigma, m.theta).rows]
    raw4 = sparsify(m.sigma, m.theta, cand[3])
    done4 = complete(m.sigma, raw4)
    restored = sorted((int(i) + 1, int(j) + 1) for i, j in np.argwhere(done4.matrix != raw4.matrix))
    elapsed = time.perf_counter() - t0
    ok = (sig_err <= 0.01 and th_err <= 0.01 and cand_ok
          and pattern == [False, True, True, False, True, True]
          and restored == [(2, 4), (4, 2)] and is_psd(done4.matrix) and elapsed < 1.0)
    record(1, "worked example", ok,
           f"|dSigma|={sig_err:.4f} |dTheta|={th_err:.4f} psd={pattern} restored={restored} t={elapsed:.3f}s")


def test_criterion_02_lambda_schedule():
    v = np.array(lambda_schedule(400).values)
    first = np.allclose(v[:121], np.linspace(0, 1, 121), rtol=0, atol=1e-15)
    ok = v.size == 632 and np.unique(v).size == 632 and first
    record(2, "lambda schedule", ok, f"{v.size} values, first segment evenly spaced={first}")


def test_criterion_03_completion_psd():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst, cases = np.inf, 0
    for k in range(200):
        n = int(rng.integers(3, 41))
        rank = int(rng.integers(1, n + 1)) if k % 2 else n
        s = random_cov(rng, n, rank)
        theta = cov_to_corr(s)
        scale = float(np.max(np.diag(s)))
        for tau in threshold_candidates(theta):
            if tau >= 1:
                continue
            done = complete(s, sparsify(s, theta, tau))
            worst = min(worst, float(np.linalg.eigvalsh(done.matrix)[0]) / scale)
            cases += 1
    elapsed = time.perf_counter() - t0
    record(3, "completion keeps PSD", worst >= -1e-10 and elapsed < 30,
           f"{cases} completions, min eig/max diag={worst:.2e}, t={elapsed:.1f}s")


def test_criterion_04_qp_oracle():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    max_err, mono_viol = 0.0, 0.0
    for k in range(50):
        n = int(rng.integers(1, 7))
        sigma = random_cov(rng, n, int(rng.integers(1, n + 1)))
        mu = rng.normal(0, 1, n)
        lams = np.sort(np.concatenate([[0.0], 10.0 ** rng.uniform(-3, 3, 19)]))
        names = tuple(f"a{i}" for i in range(n))
        m = MomentSet(names, mu, sigma, cov_to_corr(sigma))
        f = trace_frontier(m, LambdaSchedule(tuple(lams)))
        for rec in f.records:
            ref, _ = active_set_qp(mu, sigma, rec.lam)
            max_err = max(max_err, abs(rec.portfolio.objective - ref))
        mono_viol = max(mono_viol, float(np.max(np.diff(f.column("risk")), initial=0)),
                        float(np.max(np.diff(f.column("expected_return")), initial=0)))
    elapsed = time.perf_counter() - t0
    ok = max_err <= 1e-6 and mono_viol <= 1e-8 and elapsed < 60
    record(4, "QP vs active-set enumeration", ok,
           f"max |obj err|={max_err:.2e}, max monotonicity violation={mono_viol:.2e}, t={elapsed:.1f}s")


def test_criterion_05_lp_parametric():
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    max_err, argmax_ok, checks = 0.0, True, 0
    for _ in range(20):
        n, M = int(rng.integers(2, 11)), int(rng.integers(3, 31))
        x = rng.normal(0.001, 0.02, (M, n))
        m = build_lp(ReturnMatrix(tuple(f"a{i}" for i in range(n)), x))
        g = parametric_frontier(m)
        e = np.zeros(n)
        e[np.argmax(m.mu)] = 1.0
        argmax_ok &= bool(np.isinf(g.intervals[0].gamma_high) and np.allclose(g.intervals[0].weights, e))
        for iv in g.intervals:
            hi = iv.gamma_high if np.isfinite(iv.gamma_high) else 10 * iv.gamma_low + 10
            for gam in np.linspace(iv.gamma_low, hi, 10):
                ref = lp_value(m.deviation, m.mu, m.scale, gam)
                max_err = max(max_err, abs(m.objective(gam, iv.weights) - ref))
                checks += 1
    elapsed = time.perf_counter() - t0
    ok = max_err <= 1e-8 and argmax_ok and elapsed < 60
    record(5, "parametric LP vs single-gamma LP", ok,
           f"{checks} gamma samples, max |obj err|={max_err:.2e}, infinite interval argmax={argmax_ok}, t={elapsed:.1f}s")


def test_criterion_06_reduction_identity(tmp_path):
    m, _ = synth_test_moments(30, 300, seed=5)
    s = lambda_schedule(find_max_lambda(m), fallback=True)
    base = trace_frontier(m, s)
    same = trace_frontier(reduce_universe(m, AssetMask.ones(m.tickers)), s)
    lib_ok = np.array_equal(base.weights, same.weights)
    cfg = tmp_path / "r.cfg"
    cfg.write_text("synth_assets = 25\nsynth_days = 240\nrepeats = 1\n")
    out = tmp_path / "out"
    codes = [cli.main([c, "--config", str(cfg), "--out", str(out), *extra]) for c, extra in
             (("frontier", ()), ("reduce-lp", ("--force-mask", "all")),
              ("reduce-lstm", ("--force-mask", "all")), ("report", ()))]
    with open(out / "portfolio.csv", newline="") as fh:
        rows = {r[0]: r[2:] for r in list(csv.reader(fh))[1:]}
    cli_ok = codes == [0] * 4 and rows["reduce-lp"] == rows["baseline"] == rows["reduce-lstm"]
    record(6, "all-ones reduction identity", lib_ok and cli_ok,
           f"library weights identical={lib_ok}, CLI portfolio rows identical={cli_ok}")


def test_criterion_07_sparse_speed():
    rep = bench_factorization(2000, 10000, 0.99, 100)
    m, realized = synth_test_moments(500, 1000, seed=0)
    levels = select_levels(sweep(m.sigma, m.theta, check_psd=False), m.sigma, m.theta, [0.0, 0.9])
    s = lambda_schedule(find_max_lambda(m), fallback=True)
    tpi = []
    for lv in levels:
        f = trace_frontier(m.with_sigma(lv.matrix), s, model=RiskModel(lv.matrix), repeats=2)
        tpi.append(evaluate(f, realized).avg_tpi)
    ok = rep.sparse_mean < rep.dense_mean and tpi[1] < tpi[0]
    record(7, "sparse factorization speed", ok,
           f"sparse 10000^2 {rep.sparse_mean * 1e3:.1f} ms vs dense 2000^2 {rep.dense_mean * 1e3:.1f} ms; "
           f"TPI at {levels[1].sparsity:.0%} sparsity {tpi[1] * 1e3:.3f} ms vs dense {tpi[0] * 1e3:.3f} ms")


def test_criterion_08_sparsify_portfolios():
    m, realized = synth_test_moments(200, 1000, seed=0)
    levels = select_levels(sweep(m.sigma, m.theta, check_psd=False), m.sigma, m.theta, [0.0, 0.5, 0.7, 0.9])
    s = lambda_schedule(find_max_lambda(m), fallback=True)
    counts, var = [], []
    for lv in levels:
        r = evaluate(trace_frontier(m.with_sigma(lv.matrix), s), realized, risk_sigma=m.sigma)
        counts.append(r.asset_count)
        var.append(r.risk)
    ratios = [v / var[0] for v in var]
    ok = all(b >= a for a, b in zip(counts, counts[1:])) and all(0.5 <= q <= 2.0 for q in ratios)
    record(8, "sparsification portfolios", ok,
           f"sparsity {[round(lv.sparsity, 3) for lv in levels]} assets {counts} VAR ratio {[round(q, 3) for q in ratios]}")


def test_criterion_09_lstm_numerics():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for hidden, length in ((2, 4), (5, 9), (8, 12)):
        p = init_lstm(hidden, seed=hidden)
        p = p.with_flat(p.flat() + rng.normal(0, 0.3, p.flat().size))
        X = rng.normal(0, 1, (4, length))
        y = np.array([0, 1, 1, 0])
        beta = ClassWeights(0.6, 1.4)
        _, g = objective_and_grad(p, X, y, beta, 1e-3)
        v = p.flat()
        num = np.empty_like(v)
        for k in range(v.size):
            e = np.zeros_like(v)
            e[k] = 1e-6
            num[k] = (objective_and_grad(p.with_flat(v + e), X, y, beta, 1e-3)[0]
                      - objective_and_grad(p.with_flat(v - e), X, y, beta, 1e-3)[0]) / 2e-6
        worst = max(worst, np.linalg.norm(g.flat() - num) / max(np.linalg.norm(g.flat()), np.linalg.norm(num)))
    r = 0.01
    xs = ReturnMatrix(tuple(map(str, range(8))), np.array([[r] * 20 if k < 4 else [-r] * 20 for k in range(8)]).T)
    ys = AssetMask(np.arange(8) < 4)
    res = train(xs, ys, TrainConfig(learning_rate=0.01, max_epochs=200, batch_size=8, hidden=8))
    fit = float(np.mean(predict_mask(res.params, xs).bits == ys.bits))
    acc = (ConfusionMatrix.from_counts(246, 46, 63, 19).accuracy, ConfusionMatrix.from_counts(205, 41, 104, 24).accuracy)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-5 and fit == 1.0 and round(acc[0], 3) == 0.709 and round(acc[1], 3) == 0.612 and elapsed < 120
    record(9, "LSTM numerics", ok,
           f"grad rel err={worst:.1e}, toy train accuracy={fit:.0%}, "
           f"confusion accuracies={acc[0]:.1%}/{acc[1]:.1%}, t={elapsed:.1f}s")


def test_criterion_10_report_identities(tmp_path):
    cfg = tmp_path / "r.cfg"
    cfg.write_text("synth_assets = 25\nsynth_days = 240\nrepeats = 3\nhidden = 4\nepochs = 2\nbatch_size = 10\n")
    out = tmp_path / "out"
    for c in ("frontier", "sparsify", "reduce-lp", "reduce-lstm", "report"):
        assert cli.main([c, "--config", str(cfg), "--out", str(out)]) == 0
    with open(out / "optimizer.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    worst = 0.0
    for r in rows:
        it, t, tpi = float(r["avg_iterations"]), float(r["avg_time"]), float(r["avg_tpi"])
        worst = max(worst, abs(tpi * it - t), abs(it * int(r["n_lambda"]) - int(r["total_iterations"])))
    record(10, "optimizer table identities", worst <= 1e-9 and len(rows) == 10,
           f"{len(rows)} rows, max identity residual={worst:.1e}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
