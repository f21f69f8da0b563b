"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` to see the lines in the
terminal summary.  The study reproductions are marked ``slow``.
"""

import os
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from depthgram.depth import mbd, mbd_brute, mei, mei_brute, parabola_f, parabola_g
from depthgram.engine import analyze, depth_matrices, depthgram_points, stream
from depthgram.formats import ArraySource
from depthgram.study import StudyConfig, run_study
from depthgram.synth import ModelConfig, SyntheticSource, draw_truth, time_grid


def _exact_bound_gap(sample):
    """``f_n(MEI) - MBD`` per curve as Fractions."""
    b, e = mbd(sample), mei(sample)
    n, m = b.n, b.m
    pairs = n * (n - 1) // 2
    return [parabola_f(n, Fraction(int(g), n * m)) - Fraction(int(p), pairs * m)
            for p, g in zip(b.numerators, e.numerators)]


def test_ac1_oracle_equivalence(verdict):
    rng = np.random.default_rng(20240101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(2, 16))
        m = int(rng.integers(1, 21))
        x = rng.integers(0, 4, size=(n, m)).astype(float)
        if n > 2:
            x[rng.integers(n)] = x[rng.integers(n)]
        worst = max(worst,
                    np.abs(mbd(x).values - mbd_brute(x).values).max(),
                    np.abs(mei(x).values - mei_brute(x).values).max())
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 10
    verdict("AC1 oracle equivalence", ok,
            f"max |fast - brute| = {worst:.2e} (tol 1e-12), {elapsed:.2f}s (< 10s)")
    assert ok


def test_ac2_bound_and_equality(verdict):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst = -np.inf
    for _ in range(200):
        n = int(rng.integers(2, 16))
        m = int(rng.integers(1, 21))
        x = rng.standard_normal((n, m))
        worst = max(worst, (mbd(x).values - parabola_f(n, mei(x).values)).max())
    n_equal = 0
    for k in range(50):
        n = int(rng.integers(2, 16))
        m = int(rng.integers(1, 21))
        heights = rng.permutation(n).astype(float) * 2
        x = heights[:, None] + np.sin(np.linspace(0, 3, m))[None, :]
        n_equal += all(g == 0 for g in _exact_bound_gap(x))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and n_equal == 50 and elapsed < 5
    verdict("AC2 bound and equality", ok,
            f"max MBD - f_n(MEI) = {worst:.2e} over 200 samples; "
            f"exact equality on {n_equal}/50 non-crossing samples; {elapsed:.2f}s (< 5s)")
    assert ok


def _parabola_pairs(dg):
    n, m = dg.n, dg.m
    pairs = n * (n - 1) // 2
    return [(Fraction(int(p), pairs * m), parabola_g(n, 1 - Fraction(int(g), n * m)))
            for g, p in zip(dg.mei_num, dg.mbd_num)]


def test_ac3_ordered_samples_on_parabola(verdict):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    eq_checked = eq_failed = 0
    for _ in range(40):
        n, p, N = (int(v) for v in rng.integers([2, 1, 1], [16, 9, 9]))
        heights = rng.permutation(n).astype(float)
        x = heights[:, None, None] + rng.standard_normal((1, p, N)) * 0.2
        dgs = stream(ArraySource(x)).depthgrams()
        for variant in ("dimensions", "time"):
            for lhs, rhs in _parabola_pairs(dgs[variant]):
                eq_checked += 1
                eq_failed += lhs != rhs
    ineq_checked = 0
    worst = -np.inf
    for _ in range(60):
        n, p, N = (int(v) for v in rng.integers([3, 2, 1], [16, 9, 9]))
        # non-crossing within each dimension, orders differ across dimensions
        heights = np.stack([rng.permutation(n) for _ in range(p)], axis=1).astype(float)
        x = heights[:, :, None] + rng.standard_normal((1, p, N)) * 0.2
        dg = stream(ArraySource(x)).depthgrams()["dimensions"]
        gaps = dg.dg2 - parabola_g(n, dg.dg1)
        worst = max(worst, gaps.max())
        ineq_checked += n
    x = np.broadcast_to(np.arange(3.0)[:, None, None], (3, 2, 4))
    m = depth_matrices(ArraySource(x))
    hand = depthgram_points("dimensions", m.mbd_d, m.mei_d)
    hand_ok = (hand.dg1[1], hand.dg2[1]) == (2 / 3, 1.0) and parabola_g(3, Fraction(2, 3)) == 1
    elapsed = time.perf_counter() - t0
    ok = eq_failed == 0 and worst <= 1e-12 and hand_ok and elapsed < 5
    verdict("AC3 ordered samples on g_n", ok,
            f"exact equality {eq_checked - eq_failed}/{eq_checked} points (dimensions+time); "
            f"max LHS - RHS under non-crossing only = {worst:.2e} over {ineq_checked} points; "
            f"n=3 example DG=(2/3,1) {'ok' if hand_ok else 'wrong'}; {elapsed:.2f}s (< 5s)")
    assert ok


def _study(model, p, c_grid, reps, seed, marginal):
    cfg = StudyConfig(model=model, p=p, c_grid=c_grid, replicates=reps, seed=seed,
                      marginal=marginal, keep_points=False)
    return run_study(cfg)


@pytest.mark.slow
def test_ac4_low_dimensional_study(verdict):
    t0 = time.perf_counter()
    rows = {m: _study(m, 50, (1.0,), 200, 1000 + m, False).row(1.0) for m in (1, 2, 3, 4)}
    elapsed = time.perf_counter() - t0

    def fmt(r, k):
        return f"{r[k + '_mean']:.3f}({r[k + '_std']:.3f})"

    r1, r2 = rows[1], rows[2]
    checks = [
        r1["pc_joint_mean"] >= 0.95,
        r1["pc_shape_mean"] >= 0.90,
        r1["pf_mean"] <= 0.02,
        r1["pc_magnitude_mean"] <= 0.5,
        r2["pc_magnitude_mean"] >= 0.99,
        r2["pc_joint_mean"] >= 0.95,
        elapsed < 20 * 60,
    ]
    detail = "; ".join(
        f"M{m}: p_m={fmt(r, 'pc_magnitude')} p_s={fmt(r, 'pc_shape')} "
        f"p_j={fmt(r, 'pc_joint')} p_f={fmt(r, 'pf')}" for m, r in rows.items())
    ok = all(checks)
    verdict("AC4 low-dimensional study", ok, f"{detail}; {elapsed:.0f}s (< 1200s)")
    assert ok


@pytest.mark.slow
def test_ac5_marginal_rates(verdict):
    t0 = time.perf_counter()
    s = _study(1, 1000, (1.0, 0.0), 50, 5000, True)
    elapsed = time.perf_counter() - t0
    c1, c0 = s.row(1.0), s.row(0.0)
    mag_pc = c1["marginal_pc_magnitude_mean"]
    sh_pc = c1["marginal_pc_shape_mean"]
    sh_pf = c1["marginal_pf_shape_mean"]
    sh_pf0 = c0["marginal_pf_shape_mean"]
    ok = (mag_pc >= 0.99 and 0.90 <= sh_pc <= 0.99 and 0.015 <= sh_pf <= 0.04
          and 0.03 <= sh_pf0 <= 0.05 and elapsed < 15 * 60)
    verdict("AC5 marginal-screen rates", ok,
            f"c=1: magnitude p_c={mag_pc:.4f} (>= 0.99), shape p_c={sh_pc:.4f} ([0.90,0.99]), "
            f"shape p_f={sh_pf:.4f} ([0.015,0.04]); c=0: shape p_f={sh_pf0:.4f} ([0.03,0.05]), "
            f"magnitude p_f={c0['marginal_pf_magnitude_mean']:.4f}; {elapsed:.0f}s (< 900s)")
    assert ok


@pytest.mark.slow
def test_ac6_high_dimensional_behavior(verdict):
    cfg = ModelConfig(4, p=10000, c=1.0, seed=6)
    src = SyntheticSource(cfg)
    t0 = time.perf_counter()
    report = analyze(src)
    elapsed = time.perf_counter() - t0
    joint = cfg.outlier_indices("joint")
    typical = src.truth.indices("typical")
    tc = report.depthgrams["time_correlation"]
    separated = tc.d_scores[joint].min() > tc.d_scores[typical].max()
    same_dg1 = np.array_equal(report.depthgrams["time"].dg1, tc.dg1)
    covered = set(joint.tolist()) <= set(report.outliers)
    ok = separated and same_dg1 and covered and elapsed < 180
    verdict("AC6 high-dimensional behavior", ok,
            f"min joint d^tc={tc.d_scores[joint].min():.4f} vs max typical "
            f"{tc.d_scores[typical].max():.4f}; identical time DG1: {same_dg1}; "
            f"flags include joint outliers: {covered}; {elapsed:.0f}s (< 180s)")
    assert ok


def _bench(threads):
    env = dict(os.environ)
    res = subprocess.run(
        [sys.executable, "-m", "depthgram", "bench", "--n", "100", "--p", "50000", "--N", "100",
         "--threads", str(threads)],
        capture_output=True, text=True, env=env, check=True)
    fields = dict(line.split(" ", 1) for line in res.stdout.splitlines() if " " in line)
    return float(fields["wall_seconds"]), float(fields["peak_rss_mb"]), fields["checksum"]


@pytest.mark.slow
def test_ac7_performance_and_determinism(verdict):
    runs = {t: _bench(t) for t in (1, 2, 8)}
    walls = {t: r[0] for t, r in runs.items()}
    peaks = {t: r[1] for t, r in runs.items()}
    sums = {r[2] for r in runs.values()}
    cores = os.cpu_count()
    ok = max(walls.values()) <= 120 and max(peaks.values()) <= 1024 and len(sums) == 1
    verdict("AC7 performance and determinism", ok,
            "wall " + ", ".join(f"{t} workers {w:.1f}s" for t, w in walls.items())
            + f" (<= 120s; machine has {cores} core(s)); peak RSS "
            + ", ".join(f"{p:.0f}MB" for p in peaks.values())
            + f" (<= 1024MB); {len(sums)} distinct checksum(s)")
    assert ok


def test_ac8_generator_statistics(verdict):
    t0 = time.perf_counter()
    src = SyntheticSource(ModelConfig(1, n=100, p=1000, N=100, seed=8))
    eps = src.noise(0, 1000).reshape(-1, 100)  # 10^5 independent draws
    var = eps.var(axis=0)
    z = eps - eps.mean(axis=0)
    lag1 = (z[:, :-1] * z[:, 1:]).mean(axis=0) / np.sqrt(var[:-1] * var[1:])
    dt = time_grid(100)[1]
    target = np.exp(-dt / 0.3)
    var_err = np.abs(var - 0.3).max()
    lag_err = np.abs(lag1 - target).max()
    counts_ok = True
    for c in (0.0, 0.1, 0.25, 0.5, 0.75, 1.0):
        for p in (1, 3, 10, 50, 101):
            k = int(np.floor(c * p + 0.5))
            truth = draw_truth(ModelConfig(2, p=p, c=c, seed=p))
            counts_ok &= all(len(d) == k for d in truth.contaminated.values())
    elapsed = time.perf_counter() - t0
    ok = var_err <= 0.01 and lag_err <= 0.01 and counts_ok and elapsed < 30
    verdict("AC8 generator statistics", ok,
            f"max |var - 0.3| = {var_err:.4f}, max |lag-1 corr - {target:.4f}| = {lag_err:.4f} "
            f"over 1e5 draws (tol 0.01); contaminated counts exact: {counts_ok}; "
            f"{elapsed:.1f}s (< 30s)")
    assert ok
