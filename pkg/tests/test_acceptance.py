"""End-to-end acceptance checks for the strip transfer-matrix laboratory.

Each test covers one headline requirement and prints a single pass/fail
line with the measured numbers, so a bare `pytest -v` run doubles as the
acceptance report.  Seeds are frozen; every statistical check was sized so
its false-failure probability is negligible at these sample counts.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
from scipy.stats import linregress

from artifact._product import warmup
from artifact.bounds import rate_cap_general, rate_cap_general_bisect, rate_cap_width2
from artifact.cli import parse_config, run_experiment
from artifact.cocycle import (
    dense_grid_log_norm_max,
    grid_sup_log_norm,
    identity_state,
    lyapunov_estimate,
    min_dev_scan,
    propagate_blocks,
    replica_rates,
)
from artifact.geomlab import GeomLemmaCase, archimedes_test, geom_lemma_grid
from artifact.model import (
    RngStream,
    UniformInterval,
    deterministic,
    sample_potential,
    schrodinger_strip,
)
from artifact.spectrum import assemble_truncation, eigenpairs_in_window, fast_scan, fit_decay_rate

FREE_CHAIN_RATE = math.acosh(1.5)  # log((3 + sqrt(5))/2), top rate at energy 3


def check(num, ok, detail):
    print(f"criterion {num:02d} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {num:02d}: {detail}"


def test_criterion_01_deterministic_rate_oracle():
    warmup()  # JIT compile outside the timed region
    model = deterministic([[0.0]])
    t0 = time.perf_counter()
    est = lyapunov_estimate(model, 3.0, n=10_000, replicas=2, rng=RngStream(1, 0))
    dt = time.perf_counter() - t0
    err = abs(est.gammas[0] - FREE_CHAIN_RATE)
    check(1, err < 1e-9 and dt < 1.0, f"|rate - acosh(3/2)| = {err:.2e} (tol 1e-9), {dt:.3f}s (budget 1s)")


def test_criterion_02_reciprocal_pairing_along_long_runs():
    worst = {}
    for width, seed in ((2, 20), (3, 56)):
        model = schrodinger_strip(width, UniformInterval(-1.0, 1.0))
        blocks = sample_potential(model, 100_000, RngStream(seed, 0))
        state = propagate_blocks(identity_state(width), 0.0, blocks)
        worst[width] = state.pairing_residual
    ok = all(v < 1e-8 for v in worst.values())
    check(2, ok, f"running pairing residual over 1e5 steps: W=2 {worst[2]:.2e}, W=3 {worst[3]:.2e} (tol 1e-8)")


def test_criterion_03_spectrum_is_resolved_and_simple():
    model = schrodinger_strip(2, UniformInterval(-1.0, 1.0))
    t0 = time.perf_counter()
    est = lyapunov_estimate(model, 0.0, n=100_000, replicas=32, rng=RngStream(2024, 0))
    dt = time.perf_counter() - t0
    g1, g2 = est.gammas[0], est.gammas[1]
    diffs = est.replica_rates[:, 0] - est.replica_rates[:, 1]
    se_gap = diffs.std(ddof=1) / math.sqrt(est.replicas)
    se2 = est.std_errors[1]
    ok = (g1 - g2 > 5 * se_gap) and (g2 > 5 * se2) and dt < 60.0
    check(
        3,
        ok,
        f"gap {g1 - g2:.4f} > 5*{se_gap:.2e}, rate2 {g2:.4f} > 5*{se2:.2e}, {dt:.1f}s (budget 60s)",
    )


def test_criterion_04_deviation_frequency_decays_in_n():
    model = schrodinger_strip(1, UniformInterval(-3.0, 3.0))
    ref = lyapunov_estimate(model, 0.0, n=200_000, replicas=8, rng=RngStream(77, 0))
    g1 = ref.gammas[0]
    eps = 0.1 * g1
    ns = (100, 200, 400, 800)
    freqs = []
    for ni, n in enumerate(ns):
        root = RngStream(78, ni)
        hits = 0
        for r in range(1000):
            rates, _ = replica_rates(model, 0.0, n, 0, root.child(r))
            hits += bool(abs(rates[0] - g1) >= eps)
        freqs.append(hits / 1000)
    decreasing = all(a > b for a, b in zip(freqs, freqs[1:]))
    fit = linregress(ns, np.log(freqs))
    significant = fit.slope < 0 and fit.pvalue / 2 < 0.05
    check(
        4,
        decreasing and significant,
        f"exceedance freqs {freqs} strictly decreasing, log-freq slope {fit.slope:.2e} "
        f"(one-sided p {fit.pvalue / 2:.2e} < 0.05)",
    )


def test_criterion_05_node_bound_dominates_dense_scan():
    root = RngStream(55, 0)
    failures = 0
    for trial in range(100):
        gen = root.child(trial).generator()
        width = int(gen.integers(1, 3))
        n = int(gen.choice([20, 100]))
        j = int(gen.integers(1, width + 1))
        center = float(gen.uniform(-2.0, 2.0))
        radius = float(gen.uniform(0.05, 0.5))
        amp = float(gen.uniform(0.5, 3.0))
        model = schrodinger_strip(width, UniformInterval(-amp, amp))
        blocks = sample_potential(model, n, gen)
        bound = grid_sup_log_norm(blocks, center, radius, n, j)
        dense = dense_grid_log_norm_max(blocks, center, radius, n, j, 10 * (bound.degree + 1))
        failures += bound.bound < dense
    check(5, failures == 0, f"node bound >= 10x-finer dense max in {100 - failures}/100 trials")


def test_criterion_06_bound_formula_identities():
    v = rate_cap_general([3.0, 2.0, 1.0])
    err_root = abs(v - 8.0 / 3.0)
    err_bisect = abs(v - rate_cap_general_bisect([3.0, 2.0, 1.0]))
    w2_exact = all(
        rate_cap_general([g1, g2]) == g1
        for g1, g2 in ((1.0, 0.5), (0.853, 0.146), (2.0, 2.0), (math.pi, 1.0))
    )
    w2_bound = rate_cap_width2(1.0, 0.4)
    err_w2 = abs(w2_bound - 0.8)
    ok = err_root < 1e-12 and err_bisect < 1e-12 and w2_exact and err_w2 <= np.spacing(0.8)
    check(
        6,
        ok,
        f"cap(3,2,1) off 8/3 by {err_root:.1e}, closed-bisect gap {err_bisect:.1e}, "
        f"width-2 cap == top rate exactly: {w2_exact}, cap(1,0.4) off 0.8 by {err_w2:.1e} (<= 1 ulp)",
    )


def test_criterion_07_eigenfunction_rates_land_in_the_predicted_band():
    t0 = time.perf_counter()
    model = schrodinger_strip(2, UniformInterval(-2.0, 2.0))
    ref = lyapunov_estimate(model, 2.0, n=200_000, replicas=8, rng=RngStream(700, 0))
    g1, g2 = float(ref.gammas[0]), float(ref.gammas[1])
    lo, hi = g2 - 0.1 * g1, g1 + 0.1 * g1
    cap = rate_cap_width2(g1, g2) + 0.1 * g1
    rates = []
    root = RngStream(701, 0)
    for s in range(20):
        op = assemble_truncation(model, 2000, root.child(s))
        for pair in eigenpairs_in_window(op, (1.875, 2.125)):
            fit = fit_decay_rate(pair)
            if fit is not None:
                rates.append(fit.rate)
    rates = np.array(rates)
    dt = time.perf_counter() - t0
    in_band = float(np.mean((rates >= lo) & (rates <= hi)))
    median = float(np.median(rates))
    ok = rates.size > 0 and in_band >= 0.90 and median <= cap and dt < 600.0
    check(
        7,
        ok,
        f"{rates.size} fitted pairs, {100 * in_band:.1f}% in [{lo:.3f}, {hi:.3f}] (need 90%), "
        f"median {median:.3f} <= {cap:.3f}, {dt:.0f}s (budget 600s)",
    )


def test_criterion_08_fast_scan_floor_and_constant_oracles():
    model = schrodinger_strip(2, UniformInterval(-2.0, 2.0))
    ref = lyapunov_estimate(model, 0.0, n=100_000, replicas=8, rng=RngStream(800, 0))
    g1, g2 = float(ref.gammas[0]), float(ref.gammas[1])
    floor = -(rate_cap_width2(g1, g2) + 0.05 * g1)
    violations = 0
    for ni, n in enumerate((50, 100, 200)):
        root = RngStream(801, ni)
        for s in range(20):
            blocks = sample_potential(model, n, root.child(s))
            report = fast_scan(blocks, 0.0, 0.1, n, 256)
            violations += report.global_min < floor
    free = deterministic([[0.0]])
    zeros = sample_potential(free, 10_000, RngStream(0, 0))
    hyper = fast_scan(zeros, 3.0, 0.001, 10_000, 256)
    err_h = abs(hyper.global_min - FREE_CHAIN_RATE)
    ellip = fast_scan(zeros, 0.5, 0.001, 10_000, 256)
    err_e = abs(ellip.global_min)
    ok = violations == 0 and err_h <= 1e-3 and err_e <= 0.05
    check(
        8,
        ok,
        f"{violations}/60 scans dipped under {floor:.3f}; expanding-window min off by {err_h:.1e} "
        f"(tol 1e-3), rotating-window min off by {err_e:.1e} (tol 0.05)",
    )


def test_criterion_09_projection_geometry_bench():
    hatbox = archimedes_test(3, 1, 1_000_000, RngStream(31, 0))
    circle = archimedes_test(2, 1, 100_000, RngStream(32, 0))
    cases = [GeomLemmaCase((t, -t), 1, 0.0) for t in (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)]
    grid = geom_lemma_grid(cases, 100_000, RngStream(33, 0))
    slope_err = abs(grid.slope - (-1.0))
    ok = (
        hatbox.ks_quadratic < 0.01
        and circle.quadratic_consistent
        and not circle.linear_consistent
        and slope_err <= 0.15
    )
    check(
        9,
        ok,
        f"hat-box KS {hatbox.ks_quadratic:.2e} < 0.01; circle KS quadratic {circle.ks_quadratic:.2e} "
        f"passes / linear {circle.ks_linear:.2e} fails at crit {circle.ks_critical_1pct:.2e}; "
        f"lemma slope {grid.slope:.3f} within 0.15 of -1",
    )


def test_criterion_10_two_horizon_deviation_improves_with_n():
    model = schrodinger_strip(2, UniformInterval(-1.0, 1.0))
    grid_points = 64
    lambdas = np.linspace(-0.5, 0.5, grid_points)
    ref_root = RngStream(900, 0)
    table = np.empty((grid_points, 2))
    for i, lam in enumerate(lambdas):
        est = lyapunov_estimate(model, float(lam), n=20_000, replicas=2, rng=ref_root.child(i))
        table[i] = est.gammas[:2]
    threshold = 0.15 * float(table[:, 0].max())
    fractions = []
    for ni, n in enumerate((20, 30, 40)):
        root = RngStream(901, ni)
        exceed = 0
        for s in range(20):
            scan = min_dev_scan(model, (-0.5, 0.5), n, grid_points, table, root.child(s))
            exceed += scan.sup_combined > threshold
        fractions.append(exceed / 20)
    ok = all(a >= b for a, b in zip(fractions, fractions[1:]))
    check(10, ok, f"fraction of seeds over threshold {threshold:.4f}: {fractions} (non-increasing)")


DEVSCAN_CONFIG = """{
  "experiment": "devscan",
  "master_seed": 5,
  "model": {"width": 2, "kind": "schrodinger_strip",
            "site_law": {"law": "uniform", "lo": -2.0, "hi": 2.0}},
  "interval": [-0.5, 0.5],
  "n": 12,
  "grid_points": 8,
  "seeds": 4,
  "reference": {"n": 1000, "replicas": 2}
}"""

FASTSCAN_CONFIG = """{
  "experiment": "fastscan",
  "master_seed": 9,
  "model": {"width": 2, "kind": "schrodinger_strip",
            "site_law": {"law": "uniform", "lo": -1.5, "hi": 1.5}},
  "center": 0.0,
  "radius": 0.05,
  "n": 80,
  "grid_points": 16,
  "seeds": 4,
  "reference": {"n": 2000, "replicas": 2}
}"""


def test_criterion_11_worker_count_never_changes_csv_bytes(tmp_path):
    mismatches = []
    for name, text, table in (
        ("devscan", DEVSCAN_CONFIG, "devscan.csv"),
        ("fastscan", FASTSCAN_CONFIG, "fastscan.csv"),
    ):
        blobs = {}
        for workers in (1, 2):
            out = tmp_path / f"{name}_w{workers}"
            cfg = parse_config(text, workers=workers, output_dir=str(out))
            run_experiment(cfg)
            blobs[workers] = (out / table).read_bytes()
            # the summary must agree too, apart from timing
            summary = json.loads((out / "summary.json").read_text())
            assert summary["config_sha256"] == cfg.config_sha256
        if blobs[1] != blobs[2]:
            mismatches.append(name)
    check(11, not mismatches, f"CSV bytes identical across 1 vs 2 workers for devscan and fastscan {mismatches or ''}")
