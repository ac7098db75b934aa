"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary
(and immediately, when pytest runs with ``-s``).
"""

import time
from dataclasses import replace

import mpmath
import numpy as np
import pytest

from conftest import record
from csge.core import Dataset, EtaVector
from csge.ensemble import FoldPlan, build_prediction_cube, cross_validate, fit, make_fold_plan
from csge.estimators import EstimatorSpec
from csge.estimators import fit as fit_estimator
from csge.io import load_diabetes, load_model, save_model
from csge.optim import ObjectiveConfig
from csge.softgate import eta_penalty, soft_gate
from csge.synthetic import run_experiment
from csge.weighting import fit_pca

from oracles import pca_oracle, subspace_cosines


def check(criterion, ok, detail):
    ok = bool(ok)
    record(criterion, ok, detail)
    print(f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}")
    assert ok, detail


def gate_formula(errors, eta, eps=1e-9):
    total = sum(errors)
    raw = [total / ((1.0 if eta == 0 else e**eta) + eps) for e in errors]
    return np.array(raw) / sum(raw)


def test_c01_soft_gate_algebra():
    rng = np.random.default_rng(1)
    dev = max(
        np.max(np.abs(soft_gate([1, 3], 1) - [0.75, 0.25])),
        np.max(np.abs(soft_gate([1, 3], 2) - [0.9, 0.1])),
        np.max(np.abs(soft_gate([1, 3], 1) - gate_formula([1, 3], 1))),
        np.max(np.abs(soft_gate([1, 3], 2) - gate_formula([1, 3], 2))),
    )
    uniform = 0.0
    for _ in range(1000):
        e = rng.uniform(0, 100, size=rng.integers(1, 51))
        uniform = max(uniform, np.max(np.abs(soft_gate(e, 0) - 1 / len(e))))
    check("C1 soft-gate algebra", dev <= 1e-9 and uniform <= 1e-9,
          f"max deviation {dev:.2e}, eta=0 deviation {uniform:.2e}")


def test_c02_penalty_heuristic():
    start = time.perf_counter()
    with mpmath.workdps(50):
        ref = {
            x: 1 / (1 + mpmath.exp(-(mpmath.mpf(x) - 10) / 2))
            + 1 / (2 * (1 + mpmath.exp(mpmath.sqrt(x))))
            for x in (0, 4, 10)
        }
    dev = max(abs(eta_penalty(x) - float(v)) for x, v in ref.items())
    grid = np.round(np.arange(0, 1201) * 0.01, 2)
    argmin = float(grid[np.argmin(eta_penalty(grid))])
    elapsed = time.perf_counter() - start
    check("C2 penalty heuristic", dev <= 1e-9 and 1 <= argmin <= 6 and elapsed < 1,
          f"max deviation {dev:.2e}, argmin {argmin:.2f}, {elapsed:.3f}s")


def test_c03_global_synthetic():
    start = time.perf_counter()
    run = run_experiment("global")
    elapsed = time.perf_counter() - start
    w_final = run.w_final.mean(axis=(0, 1))
    spread = np.ptp(run.w_final[:, 0, 0])
    ok = run.rmse < 0.05 and np.all(np.abs(w_final - [0.6, 0.4]) <= 0.02) and elapsed < 10
    check("C3 global synthetic", ok,
          f"rmse {run.rmse:.2e}, recovered weights {np.round(w_final, 4).tolist()} "
          f"(spread {spread:.1e}), global aspect {np.round(run.w_global, 4).tolist()}, "
          f"eta {np.round(run.model.eta.as_array(), 3).tolist()}, {elapsed:.1f}s")


def test_c04_local_synthetic():
    start = time.perf_counter()
    run = run_experiment("local")
    elapsed = time.perf_counter() - start
    x = run.x_test
    far = (np.abs(x - 10) >= 0.5) & (np.abs(x - 15) >= 0.5)
    inside = (x >= 10) & (x <= 15)
    correct = np.where(inside, 1, 0)
    err = run.abs_error[far, 0].max()
    w_ok = run.w_local[far, correct[far]].min()
    ok = err < 0.1 and w_ok > 0.9 and elapsed < 30
    check("C4 local synthetic", ok,
          f"{far.sum()} test points, max error {err:.2e}, min correct local weight {w_ok:.6f}, {elapsed:.1f}s")


def test_c05_time_synthetic():
    start = time.perf_counter()
    run = run_experiment("time")
    elapsed = time.perf_counter() - start
    err = run.abs_error.max()
    early = run.w_time[:3, 0].min()
    late = run.w_time[3:, 1].min()
    ok = run.truth.shape[1] == 6 and err < 0.1 and early > 0.99 and late > 0.99 and elapsed < 30
    check("C5 time synthetic", ok,
          f"max error {err:.2e}, f1 time weight (t<3) >= {early:.6f}, "
          f"f2 time weight (t>=3) >= {late:.6f}, {elapsed:.1f}s")


class _Probe:
    """Wraps a fitted member and checks every row it is asked to predict."""

    def __init__(self, est, train_ids, log):
        self.est, self.train_ids, self.log = est, train_ids, log

    def predict(self, X, t=0):
        ids = X[:, -1].astype(int)
        self.log["leaks"] += len(self.train_ids.intersection(ids.tolist()))
        np.add.at(self.log["predicted"], ids, 1)
        return self.est.predict(X, t)


def test_c06_fold_hygiene():
    rng = np.random.default_rng(2024)
    specs = [EstimatorSpec("linear_least_squares"), EstimatorSpec("analytic_function", {"expression": "x[0]"})]
    leaks = bad_coverage = bad_complement = 0
    trials = 1000
    for trial in range(trials):
        K = int(rng.choice([2, 5, 10]))
        n = int(rng.integers(K, 201))
        T = int(rng.integers(1, 3))
        if trial % 2:
            plan = make_fold_plan(n, K, seed=int(rng.integers(1 << 31)))
        else:
            assign = np.concatenate([np.arange(K), rng.integers(0, K, n - K)])
            plan = FoldPlan(K, rng.permutation(assign))
        X = np.column_stack([rng.normal(size=n), np.arange(n)])
        data = Dataset(X, rng.normal(size=(n, T)), lead_times=np.arange(T))
        log = {"leaks": 0, "predicted": np.zeros(n, dtype=int)}

        def fitter(spec, train):
            nonlocal bad_complement
            ids = set(train.features[:, -1].astype(int).tolist())
            folds = np.unique(plan.assignments[sorted(ids)])
            # a fold-k copy must see every row of the other K-1 folds and nothing else
            expected = set(np.flatnonzero(np.isin(plan.assignments, folds)).tolist())
            if len(folds) != K - 1 or ids != expected:
                bad_complement += 1
            return _Probe(fit_estimator(spec, train), ids, log)

        build_prediction_cube(specs, data, plan, fitter)
        leaks += log["leaks"]
        bad_coverage += int(np.any(log["predicted"] != len(specs) * T))
    check("C6 fold hygiene", leaks == 0 and bad_coverage == 0 and bad_complement == 0,
          f"{trials} trials: {leaks} leaked rows, {bad_coverage} coverage errors, "
          f"{bad_complement} training sets that were not exactly the other folds")


def test_c07_pca_oracle():
    rng = np.random.default_rng(77)
    worst_eig, worst_cos = 0.0, 1.0
    for i in range(100):
        X = rng.normal(size=(8, 4)) * rng.uniform(0.1, 10, size=4) + rng.normal(size=4)
        n_dim = 1 + i % 4
        proj = fit_pca(X, n_dim)
        values, basis = pca_oracle(X, n_dim)
        worst_eig = max(worst_eig, np.max(np.abs(proj.eigenvalues - values)))
        worst_cos = min(worst_cos, subspace_cosines(proj.basis, basis).min())
        worst_cos = min(worst_cos, np.abs(np.sum(proj.basis * basis, axis=0)).min())
    check("C7 PCA oracle", worst_eig <= 1e-8 and worst_cos >= 1 - 1e-8,
          f"100 matrices: max eigenvalue error {worst_eig:.2e}, min |cos| {worst_cos:.12f}")


@pytest.mark.slow
def test_c08_diabetes_direction():
    data = load_diabetes()
    specs = [
        EstimatorSpec("linear_least_squares"),
        EstimatorSpec("knn_regressor", {"k": 5}),
        EstimatorSpec("decision_tree", {"max_depth": 5}),
    ]
    start = time.perf_counter()
    report = cross_validate(specs, data, n_folds=10, seeds=range(10), inner_folds=5)
    elapsed = time.perf_counter() - start
    means = {k: float(np.mean(v)) for k, v in report.rows.items()}
    worst = max(means[s.label] for s in specs)
    ok = means["csge"] <= means["averaging"] and means["csge"] <= worst and elapsed < 300
    table = ", ".join(f"{k} {v:.2f}" for k, v in means.items())
    check("C8 diabetes direction", ok, f"mean RMSE over 100 folds: {table}; {elapsed:.0f}s")


def _random_model(rng):
    n = int(rng.integers(30, 120))
    F = int(rng.integers(1, 5))
    T = int(rng.integers(1, 4))
    X = rng.normal(size=(n, F)) * rng.uniform(0.5, 5, size=F)
    Y = np.stack([np.sin(X[:, 0] * (t + 1)) + X[:, -1] * t for t in range(T)], axis=1)
    Y = Y + rng.normal(scale=rng.uniform(0.01, 1), size=Y.shape)
    pool = [
        EstimatorSpec("linear_least_squares"),
        EstimatorSpec("knn_regressor", {"k": int(rng.integers(1, 8))}),
        EstimatorSpec("decision_tree", {"max_depth": int(rng.integers(1, 6))}),
        EstimatorSpec("analytic_function", {"expression": "sin(x) + t"}),
        EstimatorSpec("analytic_function", {"expression": "x[0] * 3 - 1"}),
    ]
    J = int(rng.integers(2, 5))
    specs = [pool[i] for i in rng.choice(len(pool), J, replace=False)]
    cfg = ObjectiveConfig(c_reg=float(rng.uniform(0, 1)), use_penalty_heuristic=bool(rng.integers(2)),
                          max_refine_iters=60)
    data = Dataset(X, Y, lead_times=np.arange(T))
    return fit(specs, data, obj_cfg=cfg, seed=int(rng.integers(1000))), X


def test_c09_normalisation_invariants():
    rng = np.random.default_rng(9)
    calls = sum_dev = 0
    worst_sum = 0.0
    outside = 0
    models = 20
    for m in range(models):
        model, X = _random_model(rng)
        if m % 4 == 3:
            model = replace(model, eta=EtaVector.from_array(rng.choice([0.0, 12.0], 3)))
        lo, hi = X.min(axis=0), X.max(axis=0)
        for _ in range(10_000 // models):
            x = rng.uniform(lo - 1, hi + 1)
            t = int(rng.integers(model.n_lead_times))
            value, bd = model.predict(x, t)
            members = model.member_predictions(x[None], t)[0]
            for w in (bd.w_global, bd.w_local, bd.w_time, bd.w_final):
                dev = abs(w.sum() - 1)
                worst_sum = max(worst_sum, dev)
                sum_dev += dev > 1e-9
            slack = 4 * np.spacing(np.max(np.abs(members)))
            outside += not (members.min() - slack <= value <= members.max() + slack)
            calls += 1
    check("C9 normalisation invariants", calls == 10_000 and sum_dev == 0 and outside == 0,
          f"{calls} calls on {models} models: max |sum-1| {worst_sum:.1e}, "
          f"{outside} fused values outside the member range")


def test_c10_serialisation(tmp_path):
    rng = np.random.default_rng(10)
    model, X = _random_model(rng)
    while model.n_lead_times < 2 or model.n_members < 3:
        model, X = _random_model(rng)
    path = tmp_path / "model.json"
    save_model(model, path)
    back = load_model(path)
    lo, hi = X.min(axis=0), X.max(axis=0)
    mismatches = 0
    for _ in range(1000):
        x = rng.uniform(lo - 1, hi + 1)
        t = int(rng.integers(model.n_lead_times))
        v1, b1 = model.predict(x, t)
        v2, b2 = back.predict(x, t)
        same = v1 == v2 and all(
            np.array_equal(a, b) for a, b in zip(b1.rows(), b2.rows())
        )
        mismatches += not same
    check("C10 serialisation", mismatches == 0,
          f"1000 queries over {model.n_lead_times} lead times and {model.n_members} members: "
          f"{mismatches} differ after save/load")
