"""Exit criteria. Each test records one PASS/FAIL line for the summary."""

import time

import numpy as np
import pytest

from rtm.core import RtmConfig, cross_moment, second_moment, solve_weights, train_ridge, train_rtm
from rtm.dataset import DomainPair, FeatureMatrix, LabelSet, one_hot
from rtm.evaluation import default_grid, sweep_p
from rtm.oracle import enumerate_expectation, mc_convergence

from conftest import ACCEPTANCE_LINES


def record(name, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, detail


def small_fixture(seed, max_k=10, max_n=20, max_C=4):
    r = np.random.default_rng(seed)
    k = int(r.integers(1, max_k + 1))
    n = int(r.integers(1, max_n + 1))
    C = int(r.integers(2, max_C + 1))
    return r.standard_normal((k, n)), one_hot(r.integers(0, C, n), C)


def ridge_fixture(seed):
    """k in [2, 10], n in [5, 50], C in [2, 4], alpha = n (i.e. 1 per sample)."""
    r = np.random.default_rng(1000 + seed)
    k, n, C = int(r.integers(2, 11)), int(r.integers(5, 51)), int(r.integers(2, 5))
    return r.standard_normal((k, n)), one_hot(r.integers(0, C, n), C), float(n)


def test_closed_form_matches_enumeration():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(50):
        Z, Y = small_fixture(seed)
        for p in default_grid():
            m = enumerate_expectation(Z, Y, p)
            worst = max(worst,
                        np.abs(m.P - cross_moment(Z, Y, p)).max(),
                        np.abs(m.Q - second_moment(Z, p)).max())
    dt = time.perf_counter() - t0
    record("closed form vs enumeration", worst <= 1e-10 and dt < 10,
           f"max abs diff {worst:.2e} (<= 1e-10), {dt:.2f}s (< 10s)")


@pytest.mark.slow
def test_weak_law_convergence():
    r = np.random.default_rng(2024)
    Z = r.standard_normal((10, 200))
    Y = one_hot(r.integers(0, 3, 200), 3)
    t0 = time.perf_counter()
    rows = mc_convergence(Z, Y, RtmConfig(0.5, 1.0), [10, 100, 1000, 10_000, 100_000], seeds=range(5))
    dt = time.perf_counter() - t0
    errs = [e for _, e, _ in rows]
    monotone = all(b <= a for a, b in zip(errs[:4], errs[1:4]))
    ok = monotone and errs[4] < 0.02 and dt < 60
    record("weak-law convergence", ok,
           "mean rel err " + ", ".join(f"J={J}:{e:.4f}" for J, e, _ in rows)
           + f"; monotone={monotone}; {dt:.1f}s (< 60s)")


def test_baseline_reduction():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        Z, Y, alpha = ridge_fixture(seed)
        W0 = train_rtm(Z, Y, RtmConfig(0.0, alpha)).W
        Wr = train_ridge(Z, Y, alpha).W
        worst = max(worst, np.linalg.norm(W0 - Wr) / np.linalg.norm(Wr))
    dt = time.perf_counter() - t0
    record("baseline reduction p=0", worst <= 1e-12 and dt < 5,
           f"max rel Frobenius {worst:.2e} (<= 1e-12), {dt:.2f}s (< 5s)")


def test_degenerate_limit():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        Z, Y, alpha = ridge_fixture(seed)
        w0 = np.linalg.norm(train_rtm(Z, Y, RtmConfig(0.0, alpha)).W)
        w99 = np.linalg.norm(train_rtm(Z, Y, RtmConfig(0.99, alpha)).W)
        worst = max(worst, w99 / w0)
    dt = time.perf_counter() - t0
    record("degenerate limit p=0.99", worst < 0.05 and dt < 5,
           f"max ||W(0.99)||/||W(0)|| = {worst:.4f} (< 0.05), {dt:.2f}s (< 5s)")


def shifted_gaussians(seed, k=20, per=500, shift=0.5):
    r = np.random.default_rng(seed)
    e1, e2 = np.eye(k)[0], np.eye(k)[1]
    ids = np.repeat([0, 1], per)
    mu = np.where(ids[:, None] == 0, e1, -e1)
    Xs = mu + r.standard_normal((2 * per, k))
    Xt = mu + shift * e2 + r.standard_normal((2 * per, k))
    Y = LabelSet(ids, 2)
    return DomainPair(FeatureMatrix.from_rows(Xs), Y, FeatureMatrix.from_rows(Xt), Y, task_name=f"shift-{seed}")


# fraction of seeds with a strict win, recorded from the first run of this suite: 13/20
STRICT_WIN_FRACTION = 0.5


def test_synthetic_domain_shift():
    grid = (0.0,) + default_grid()
    never_worse, strict = 0, 0
    for seed in range(20):
        rep = sweep_p(shifted_gaussians(seed), 1.0, grid)
        never_worse += rep.best_accuracy >= rep.baseline_accuracy
        strict += rep.best_accuracy > rep.baseline_accuracy
    ok = never_worse == 20 and strict >= STRICT_WIN_FRACTION * 20
    record("synthetic domain shift", ok,
           f"best >= baseline in {never_worse}/20; strictly better in {strict}/20 (>= 10)")


def test_solver_residual():
    r = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        k = int(r.integers(1, 65))
        A = r.standard_normal((k, int(r.integers(1, 2 * k + 1))))
        Q = A @ A.T
        alpha = float(10 ** r.uniform(-3, 2))
        P = r.standard_normal((int(r.integers(1, 6)), k))
        W = solve_weights(P, Q, alpha)
        worst = max(worst, np.linalg.norm(W @ (Q + alpha * np.eye(k)) - P) / np.linalg.norm(P))
    dt = time.perf_counter() - t0
    record("solver residual", worst <= 1e-8 and dt < 10,
           f"max relative residual {worst:.2e} (<= 1e-8), {dt:.2f}s (< 10s)")


def test_cli_reproducibility(tmp_path, capsys):
    from test_cli import TestReproducibility, shifted

    shifted(tmp_path)
    runner = TestReproducibility()
    a = runner._all(tmp_path, tmp_path / "a")
    b = runner._all(tmp_path, tmp_path / "b")
    capsys.readouterr()
    diff = sorted(name for name in a if a[name] != b.get(name))
    record("CLI reproducibility", not diff and len(a) == 8,
           f"{len(a)} output files across train/predict/eval/sweep/compare/mc-check; differing: {diff or 'none'}")
