"""Acceptance gate: one PASS/FAIL line per criterion.

Run with ``pytest -m acceptance -s tests/test_acceptance.py`` or directly as
``python tests/test_acceptance.py``. The lines are printed even when pytest
captures output.
"""

import os
import subprocess
import sys
import time

import numpy as np
import pytest

from crda import LabeledDataset, group_center, pooled_scm
from crda.classifier import (
    Selector,
    hard_threshold_rows,
    k_upper_bound,
    predict,
    selector_scores,
)
from crda.covariance import (
    CovarianceConfig,
    alpha_hat,
    ell_rscm,
    rie_pscm,
    solve_rie_eigenvalues,
    sphericity_ell2,
)
from crda.evaluation import (
    SyntheticSpec,
    evaluate_metrics,
    make_partially_synthetic,
    mean_metrics,
    monte_carlo_splits,
    naive_fit,
)
from crda.fitting import fit
from crda.io import load_dataset
from crda.linalg import rscm_inverse_operator, thin_svd_via_gram
from crda.model_selection import CvConfig, cross_validate, k_grid

pytestmark = pytest.mark.acceptance


class Gate:
    """Collects a criterion's checks and prints its verdict line."""

    def __init__(self, number, title, limit):
        self.number, self.title, self.limit = number, title, limit
        self.start = time.perf_counter()
        self.failures = []
        self.notes = []

    def check(self, ok, what):
        if not ok:
            self.failures.append(what)
        return ok

    def note(self, text):
        self.notes.append(text)

    def finish(self, capsys=None):
        elapsed = time.perf_counter() - self.start
        self.check(elapsed < self.limit, f"runtime {elapsed:.1f}s >= {self.limit}s")
        verdict = "FAIL" if self.failures else "PASS"
        line = f"[{verdict}] criterion {self.number:>2} {self.title} ({elapsed:.2f}s)"
        detail = "; ".join(self.notes + [f"failed: {f}" for f in self.failures])
        if detail:
            line += " :: " + detail
        if capsys is not None:
            with capsys.disabled():
                print("\n" + line)
        else:
            print(line)
        assert not self.failures, line


# 1 ------------------------------------------------------------------------------

def criterion_1(capsys=None):
    gate = Gate(1, "factored RSCM inverse vs dense inverse", 5.0)
    rng = np.random.default_rng(1)
    worst = 0.0
    for i in range(100):
        p, n = int(rng.integers(5, 65)), int(rng.integers(2, 33))
        alpha = (0.0, 0.3, 0.9)[i % 3]
        X = rng.standard_normal((p, n)) * rng.uniform(0.1, 5, (p, 1))
        S = X @ X.T / n
        op = rscm_inverse_operator(thin_svd_via_gram(X), alpha, n)
        dense = alpha * S + (1 - alpha) * np.trace(S) / p * np.eye(p)
        Y = rng.standard_normal((p, 3))
        ref = np.linalg.solve(dense, Y)
        worst = max(worst, np.linalg.norm(op.apply_inverse(Y) - ref) / np.linalg.norm(ref))
        inv = np.linalg.inv(dense)
        worst = max(worst, np.linalg.norm(op.inverse_dense() - inv) / np.linalg.norm(inv))
    gate.note(f"worst relative error {worst:.2e}")
    gate.check(worst <= 1e-9, "relative error above 1e-9")
    gate.finish(capsys)


# 2 ------------------------------------------------------------------------------

def criterion_2(capsys=None):
    gate = Gate(2, "shrinkage formula values", 1.0)
    a = alpha_hat(2.0, 0.0, 10, 20)
    gate.note(f"alpha={a:.15f}")
    gate.check(abs(a - 9 / 31) <= 1e-12, "alpha differs from 9/31")
    g = sphericity_ell2(np.eye(10), 10, 0.0)
    gate.note(f"clamped sphericity={g}")
    gate.check(g == 1.0, "sphericity not clamped to 1")
    gate.finish(capsys)


# 3 ------------------------------------------------------------------------------

def criterion_3(capsys=None):
    gate = Gate(3, "shrinkage MSE beats SCM and scaled identity", 60.0)
    rng = np.random.default_rng(3)
    p, n, draws = 100, 40, 200
    eig = np.linspace(1, 10, p)
    sigma = np.diag(eig)
    root = np.sqrt(eig)[:, None]
    err = {"ell1": 0.0, "ell2": 0.0, "scm": 0.0, "target": 0.0}
    for _ in range(draws):
        data = LabeledDataset(root * rng.standard_normal((p, n)), np.ones(n, dtype=int))
        S = pooled_scm(group_center(data))
        err["scm"] += np.sum((S - sigma) ** 2) / draws
        err["target"] += np.sum((np.trace(S) / p * np.eye(p) - sigma) ** 2) / draws
        for v in ("ell1", "ell2"):
            est = ell_rscm(data, v)
            err[v] += np.sum((est.operator.to_dense() - sigma) ** 2) / draws
    gate.note(", ".join(f"{k}={v:.1f}" for k, v in err.items()))
    for v in ("ell1", "ell2"):
        gate.check(err[v] <= err["scm"], f"{v} MSE above SCM")
        gate.check(err[v] <= err["target"], f"{v} MSE above scaled identity")
    gate.finish(capsys)


# 4 ------------------------------------------------------------------------------

def _grid_minimizer(d, m, eta):
    def f(t):
        return d * np.exp(-t) + t + eta * (t - np.log(m)) ** 2

    lo, hi = np.log(m) - 40.0, np.log(m) + 10.0
    if d > 0:
        lo = min(lo, np.log(d) - 5.0)
        hi = max(hi, np.log(d) + 5.0)
    for _ in range(3):
        t = np.linspace(lo, hi, 10**6)
        k = int(np.argmin(f(t)))
        step = t[1] - t[0]
        lo, hi = t[max(k - 1, 0)] - step, t[min(k + 1, t.size - 1)] + step
    return float(np.exp(t[k]))


def criterion_4(capsys=None):
    gate = Gate(4, "penalized eigenvalue solver vs brute-force grid", 30.0)
    m = 1.0
    worst = 0.0
    for d in (0.0, 0.1, 1.0, 10.0):
        for eta in (0.1, 1.0, 10.0):
            got = solve_rie_eigenvalues([d], m, eta)[0]
            ref = _grid_minimizer(d, m, eta)
            worst = max(worst, abs(got - ref) / ref)
    gate.note(f"worst relative gap {worst:.2e}")
    gate.check(worst <= 1e-6, "gap above 1e-6")
    rng = np.random.default_rng(4)
    A = rng.standard_normal((20, 10))
    S = A @ A.T / 10
    target = np.trace(S) / 20 * np.eye(20)
    dev = np.linalg.norm(rie_pscm(S, 1e6).operator.to_dense() - target) / np.linalg.norm(target)
    gate.note(f"large-penalty deviation {dev:.2e}")
    gate.check(dev < 1e-3, "large penalty does not reach the scaled identity")
    gate.finish(capsys)


# 5 ------------------------------------------------------------------------------

def criterion_5(capsys=None):
    gate = Gate(5, "hard thresholding vs brute-force sort", 5.0)
    rng = np.random.default_rng(5)
    bad = 0
    selectors = list(Selector)
    for i in range(500):
        p, G = int(rng.integers(1, 60)), int(rng.integers(2, 6))
        B = np.round(rng.standard_normal((p, G)), int(rng.integers(0, 3)))
        K = int(rng.integers(1, p + 1))
        phi = selectors[i % 4]
        out = hard_threshold_rows(B, K, phi)
        scores = selector_scores(B, phi)
        ranked = sorted(range(p), key=lambda r: (-scores[r], r))
        bad += list(out.selected_rows) != sorted(ranked[:K])
        bad += not np.array_equal(hard_threshold_rows(out.sparse, K, phi).sparse, out.sparse)
    gate.note(f"{bad} mismatches in 500 instances")
    gate.check(bad == 0, "mismatch with brute-force selection or not idempotent")
    gate.finish(capsys)


# 6 ------------------------------------------------------------------------------

def criterion_6(capsys=None):
    gate = Gate(6, "K upper bound and K grid", 5.0)
    rng = np.random.default_rng(6)
    bad = 0
    for _ in range(100):
        p, G = int(rng.integers(2, 300)), int(rng.integers(2, 6))
        B = rng.standard_normal((p, G)) * rng.exponential(1.0, (p, 1))
        counts = []
        for s in Selector:
            sc = selector_scores(B, s)
            counts.append(sum(1 for v in sc if v >= sum(sc) / len(sc)))
            bad += k_upper_bound(B, [s]) != counts[-1]
        bad += k_upper_bound(B) != min(counts)
        kub = k_upper_bound(B)
        grid = k_grid(kub, p, 10)
        k1 = max(1, p // 20)
        bad += grid[-1] != kub
        bad += kub > k1 and grid[0] != k1
        bad += kub <= k1 and grid != [kub]
    gate.note(f"{bad} mismatches in 100 instances")
    gate.check(bad == 0, "K bound or grid mismatch")
    gate.finish(capsys)


# 7 ------------------------------------------------------------------------------

def _cv_oracle(data, grid, selectors, assign):
    errors = np.zeros((len(selectors), len(grid)), dtype=int)
    for q in range(int(assign.max()) + 1):
        tr, va = data.subset(assign != q), data.subset(assign == q)
        G = tr.n_classes
        means = np.column_stack([tr.features[:, tr.labels == g].mean(axis=1)
                                 for g in range(1, G + 1)])
        B = np.linalg.solve(ell_rscm(tr, "ell2").operator.to_dense(), means)
        for i, s in enumerate(selectors):
            sc = selector_scores(B, s)
            ranked = sorted(range(len(sc)), key=lambda r: (-sc[r], r))
            for j, k in enumerate(grid):
                r = ranked[:k]
                for c in range(va.n):
                    vals = [va.features[r, c] @ B[r, g] - 0.5 * means[r, g] @ B[r, g]
                            for g in range(G)]
                    errors[i, j] += int(np.argmax(vals)) + 1 != va.labels[c]
    return errors


def criterion_7(capsys=None):
    gate = Gate(7, "cross-validation table vs double loop", 10.0)
    rng = np.random.default_rng(7)
    p, G = 30, 3
    mu = np.zeros((p, G))
    mu[:4] = rng.choice([-1.5, 1.5], size=(4, G))
    labels = np.repeat([1, 2, 3], 8)
    data = LabeledDataset(mu[:, labels - 1] + rng.standard_normal((p, 24)), labels)
    cov = CovarianceConfig(kind="ell2")
    cfg = CvConfig(folds=4, seed=7)
    rep = cross_validate(data, cov, cfg)
    oracle = _cv_oracle(data, rep.grid, cfg.selectors, rep.folds)
    gate.check(np.array_equal(rep.errors, oracle), "error table differs from oracle")
    gate.check(np.array_equal(cross_validate(data, cov, cfg).errors, rep.errors),
               "rerun not identical")
    best = rep.errors.min()
    j = rep.grid.index(rep.k)
    gate.check(rep.errors[list(rep.selectors).index(rep.selector), j] == best
               and not np.any(rep.errors[:, :j] == best), "chosen cell not smallest-K minimum")
    # all-zero table: the smallest K and the first listed selector must win
    mu = np.zeros((p, 2))
    mu[:6, 1] = 10.0
    lab2 = np.repeat([1, 2], 10)
    easy = LabeledDataset(mu[:, lab2 - 1] + 0.1 * rng.standard_normal((p, 20)), lab2)
    for order in [(Selector.L1, Selector.L2), (Selector.L2, Selector.L1)]:
        r = cross_validate(easy, cov, CvConfig(folds=5, selectors=order))
        gate.check(r.selector is order[0] and r.k == r.grid[0], "tie not resolved to smaller K")
    gate.note(f"grid={list(rep.grid)} chose {rep.selector.value}/K={rep.k}")
    gate.finish(capsys)


# 8 ------------------------------------------------------------------------------

def criterion_8(capsys=None):
    gate = Gate(8, "scaled synthetic replica (CRDA1, CRDA2)", 300.0)
    seeds = range(10)
    records = {"crda1": [], "crda2": []}
    naive_ok = True
    for seed in seeds:
        spec = SyntheticSpec(p=500, p1=25, class_sizes=(35, 35, 35, 35), n_test=60,
                             shift=1.0, noise_var=0.01, seed=seed)
        train, test, mask = make_partially_synthetic(spec)
        naive_ter = np.mean(naive_fit(train).predict(test.features) != test.labels)
        for v in records:
            model = fit(train, variant=v, seed=seed)
            rec = evaluate_metrics(predict(test.features, model), test.labels,
                                   model.selected_rows, train.p, mask)
            records[v].append(rec)
            naive_ok &= rec.ter < naive_ter
    for v, recs in records.items():
        m = mean_metrics(recs)
        gate.note(f"{v}: TER={m['ter']:.3f} FPR={m['fpr']:.3f} FNR={m['fnr']:.3f}")
        gate.check(m["ter"] <= 0.05, f"{v} mean TER above 5%")
        gate.check(m["fpr"] <= 0.05, f"{v} mean FPR above 5%")
        gate.check(m["fnr"] <= 0.20, f"{v} mean FNR above 20%")
    gate.check(naive_ok, "naive classifier not beaten on every seed")
    gate.finish(capsys)


# 9 ------------------------------------------------------------------------------

def criterion_9(capsys=None):
    gate = Gate(9, "separable two-class data, all variants", 60.0)
    p, n_per, n_test = 100, 20, 50
    worst = {}
    for seed in range(10):
        rng = np.random.default_rng(900 + seed)
        mu = np.zeros((p, 2))
        mu[0, 1] = 8.0  # ||mu1 - mu2|| = 8 along one axis
        lab = np.repeat([1, 2], n_per)
        train = LabeledDataset(mu[:, lab - 1] + rng.standard_normal((p, lab.size)), lab)
        lt = np.repeat([1, 2], n_test)
        test = LabeledDataset(mu[:, lt - 1] + rng.standard_normal((p, lt.size)), lt)
        for v in ("crda1", "crda2", "crda3", "scrda"):
            ter = np.mean(predict(test.features, fit(train, variant=v, seed=seed)) != lt)
            worst[v] = max(worst.get(v, 0.0), ter)
    gate.note(", ".join(f"{v} max TER={t:.3f}" for v, t in worst.items()))
    gate.check(all(t == 0.0 for t in worst.values()), "nonzero test error")
    gate.finish(capsys)


# 10 -----------------------------------------------------------------------------

def criterion_10(capsys=None):
    path = os.environ.get("CRDA_GENE_DATA")
    if not path or not os.path.exists(path):
        line = "[SKIP] criterion 10 real gene-expression check :: set CRDA_GENE_DATA to a CSV"
        if capsys is not None:
            with capsys.disabled():
                print("\n" + line)
        else:
            print(line)
        pytest.skip("CRDA_GENE_DATA not set")
    gate = Gate(10, "real gene-expression check (CRDA1)", 600.0)
    data = load_dataset(path)
    recs = []
    for i, split in enumerate(monte_carlo_splits(data, 10, 38, seed=0)):
        model = fit(split.train, variant="crda1", seed=i)
        recs.append(evaluate_metrics(predict(split.test.features, model), split.test.labels,
                                     model.selected_rows, data.p))
    m = mean_metrics(recs)
    gate.note(f"TER={m['ter']:.3f} FSR={m['fsr']:.3f}")
    gate.check(m["ter"] <= 0.02, "mean TER above 2%")
    gate.check(abs(m["fsr"] - 0.05) <= 0.02, "mean FSR not within 5% +- 2 points")
    gate.finish(capsys)


# 11 -----------------------------------------------------------------------------

def _pipeline(workdir):
    def crda(*args):
        subprocess.run([sys.executable, "-m", "crda", *map(str, args)], check=True,
                       capture_output=True, text=True, cwd=workdir)

    crda("synth", "--p", 200, "--p1", 10, "--sizes", "20,20,20", "--n-test", 15,
         "--seed", 11, "--out", "syn")
    crda("train", "--data", "syn/train.csv", "--variant", "crda1", "--out", "model.json")
    res = subprocess.run([sys.executable, "-m", "crda", "eval", "--model", "model.json",
                          "--data", "syn/test.csv", "--mask", "syn/mask.csv"],
                         check=True, capture_output=True, cwd=workdir)
    return res.stdout


def criterion_11(tmp_dir, capsys=None):
    gate = Gate(11, "CLI synth/train/eval reproducibility", 60.0)
    outs = []
    for k in range(2):
        d = os.path.join(tmp_dir, f"run{k}")
        os.makedirs(d)
        outs.append(_pipeline(d))
    gate.check(outs[0] == outs[1], "metric CSVs differ between runs")
    gate.check(outs[0].count(b"\n") == 2, "unexpected metric CSV shape")
    gate.note(f"{len(outs[0])} identical bytes")
    gate.finish(capsys)


# pytest wrappers --------------------------------------------------------------

def test_criterion_01_factored_inverse(capsys):
    criterion_1(capsys)


def test_criterion_02_formula_values(capsys):
    criterion_2(capsys)


def test_criterion_03_shrinkage_mse(capsys):
    criterion_3(capsys)


def test_criterion_04_eigenvalue_solver(capsys):
    criterion_4(capsys)


def test_criterion_05_hard_threshold(capsys):
    criterion_5(capsys)


def test_criterion_06_k_bound_and_grid(capsys):
    criterion_6(capsys)


def test_criterion_07_cross_validation(capsys):
    criterion_7(capsys)


def test_criterion_08_synthetic_replica(capsys):
    criterion_8(capsys)


def test_criterion_09_separable(capsys):
    criterion_9(capsys)


def test_criterion_10_real_data(capsys):
    criterion_10(capsys)


def test_criterion_11_cli_reproducible(tmp_path, capsys):
    criterion_11(str(tmp_path), capsys)


if __name__ == "__main__":
    import tempfile

    failed = 0
    for fn in (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
               criterion_7, criterion_8, criterion_9, criterion_10):
        try:
            fn()
        except AssertionError:
            failed += 1
        except pytest.skip.Exception:
            pass
    with tempfile.TemporaryDirectory() as tmp:
        try:
            criterion_11(tmp)
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
