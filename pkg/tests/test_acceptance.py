"""Acceptance criteria 1-10: each test prints one PASS/FAIL line and asserts it."""
import math
import time

import numpy as np
import pytest

from a1bellman.hilbert import xi_report
from a1bellman.lemma83 import DELTA, calibrate_delta, lemma83_sweep
from a1bellman.remodel import (ProliferationSchedule, distribution_distance,
                               red_interval_identity, remodel, w_doubling)
from a1bellman.unweighted import (closed_form_B, main_inequality_defects,
                                  random_admissible_triples)
from a1bellman.weighted import (WeightedDP, bookkeeping_witness, compare_with_unweighted,
                                empirical_weak_norm_ratio, finite_depth_defects, grid_tolerance,
                                monotone_in_m_defects, quadratic_form_sweep,
                                verify_weighted_obstacle)


def verdict(report, n, ok, detail):
    report(f"ACCEPTANCE {n:>2} {'PASS' if ok else 'FAIL'}: {detail}")
    return ok


def test_criterion_01_closed_form(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    n = 100_000
    F = rng.uniform(0.01, 3.0, n)
    f = rng.uniform(-1, 1, n) * F
    lam = F * (1 + rng.uniform(1e-9, 4.0, n))
    B = closed_form_B(F, f, lam)
    in_range = bool(np.all((B >= 0) & (B <= 1)))
    mins = []
    for sign in (1.0, -1.0):
        Ft, ft, lt, a, b, _ = random_admissible_triples(n, rng)
        mins.append(float(main_inequality_defects(closed_form_B, Ft, ft, lt, a, b, np.full(n, sign)).min()))
    dt = time.perf_counter() - t0
    ok = in_range and min(mins) >= -1e-9 and dt < 10
    assert verdict(report, 1, ok, f"B in [0,1]: {in_range}; min (mi1, mi2) = ({mins[0]:.3g}, "
                                  f"{mins[1]:.3g}) >= -1e-9; runtime {dt:.2f}s < 10s")


def test_criterion_02_obstacle(report, udp8):
    rng = np.random.default_rng(2)
    n = 10_000
    F = rng.uniform(0.01, 3.0, n)
    f = rng.uniform(-1, 1, n) * F
    lam = F * rng.uniform(0.0, 1.0, n) * (1 - 1e-12)
    exact = bool(np.all(closed_form_B(F, f, lam) == 1.0))
    seq = [float(udp8.value(1.2, 1.2, 1.0, k)) for k in range(9)]
    inc = all(b > a for a, b in zip(seq[2:], seq[3:]))
    tol = udp8.grid_tolerance(8)
    ok = exact and inc and seq[8] >= 0.9 and seq[8] <= 1.0
    assert verdict(report, 2, ok, f"B = 1 below obstacle: {exact}; N_k(1.2,1.2,1) k=2..8 = "
                                  f"{[round(v, 4) for v in seq[2:]]} strictly increasing: {inc}; "
                                  f"N_8 = {seq[8]:.4f} >= 0.9 (grid tolerance {tol:.3g})")


def test_criterion_03_dp_convergence(report, udp8):
    seq = [float(udp8.value(1.0, 0.0, 2.0, k)) for k in range(9)]
    # the one-step error of level 8, stricter than the accumulated bound
    tol = udp8.aposteriori_tolerance(8)
    mono = all(b >= a - 1e-12 for a, b in zip(seq, seq[1:]))
    grid = udp8.to_value_grid(8, resolution=65)
    Fm, fm, lm = grid.mesh()
    sel = np.isfinite(grid.values) & (np.abs(fm) <= Fm) & (Fm > 0)
    excess = float(np.max(grid.values[sel] - closed_form_B(Fm[sel], fm[sel], lm[sel])))
    dt = udp8.build_seconds
    ok = mono and max(seq) <= 0.75 + tol and seq[8] >= 0.60 and excess <= tol and dt < 600
    assert verdict(report, 3, ok, f"N_k(1,0,2) = {[round(v, 4) for v in seq]} nondecreasing: {mono}; "
                                  f"max {max(seq):.4f} <= 0.75 + {tol:.3g}; N_8 = {seq[8]:.4f} >= 0.60; "
                                  f"grid {grid.shape} max(N_8 - B) = {excess:.3g} <= tol; "
                                  f"DP runtime {dt:.0f}s < 600s")


def test_criterion_04_weighted_consistency(report, udp8, wdp8_dyadic, wdp8_interval):
    k = 6
    wdp1 = WeightedDP(1.0, pattern="dyadic", n_s=129, n_b=1, n_u=65, n_a=33, n_g=1, n_t=33).run(k)
    parts, ok = [], True
    for j in range(k + 1):
        diff = compare_with_unweighted(wdp1, udp8, j)
        tol = grid_tolerance(wdp1, j) + udp8.grid_tolerance(j) + 1e-12
        ok &= diff <= tol
        parts.append(f"k={j}: {diff:.3g}<={tol:.3g}")
    rng = np.random.default_rng(4)
    tol_m = wdp8_dyadic.interpolation_tolerance(k)
    d_mono = monotone_in_m_defects(wdp8_dyadic, k, 10_000, rng)
    tol_i = wdp8_interval.interpolation_tolerance(k)
    d_conc = finite_depth_defects(wdp8_interval, k, 10_000, rng, "3conc")
    ok &= d_mono.min() >= -tol_m and d_conc.min() >= -tol_i
    assert verdict(report, 4, ok, f"Q=1 sup-difference vs combined grid tolerance [{', '.join(parts)}]; "
                                  f"monotone in m min defect {d_mono.min():.3g} >= -{tol_m:.3g} "
                                  f"({d_mono.size} pts); midpoint concavity min defect "
                                  f"{d_conc.min():.3g} >= -{tol_i:.3g} ({d_conc.size} pts)")


def test_criterion_05_weighted_obstacle(report):
    reps = [verify_weighted_obstacle(Q) for Q in (4.0, 16.0, 64.0)]
    ok = all(r.ratio >= 1 / 3 for r in reps)
    assert verdict(report, 5, ok, "w-measure / <w> = "
                   + ", ".join(f"Q={r.Q:g}: {r.ratio:.4f}" for r in reps) + " (>= 1/3)")


def test_criterion_06_quadratic_form(report, wdp8_interval):
    k = 6
    tol = wdp8_interval.interpolation_tolerance(k, quantile=0.99)
    grid = wdp8_interval.to_value_grid(k, alpha_max=3.0, resolution=49).smoothed(3)
    rep, _ = quadratic_form_sweep(grid, 400, np.random.default_rng(6), tol)
    ok = rep["conclusive"] > 0 and rep["fraction"] >= 0.95
    assert verdict(report, 6, ok, f"{rep['satisfied']}/{rep['conclusive']} conclusive samples "
                                  f"satisfy K >= -tol and N >= L^2/4K - tol: {rep['fraction']:.3f} "
                                  f">= 0.95 (tol {tol:.3g}, {rep['inconclusive']} inconclusive)")


def test_criterion_07_blowup(report):
    Qs = [2.0, 4.0, 8.0, 16.0, 32.0]
    res = [empirical_weak_norm_ratio(Q, 4, candidates=16) for Q in Qs]
    ratios = [r.ratio for r in res]
    inc = all(b > a for a, b in zip(ratios, ratios[1:]))
    certified = all(r.a1 <= r.Q * (1 + 1e-9) for r in res)
    low, high = bookkeeping_witness(0.1), bookkeeping_witness(0.5)
    ok = inc and certified and low.threshold is not None and high.status != "contradiction"
    assert verdict(report, 7, ok, "monotone growth only (no rate asserted): ratios "
                   + ", ".join(f"Q={Q:g}: {r:.4f}" for Q, r in zip(Qs, ratios))
                   + f" strictly increasing: {inc}; bookkeeping p=0.1 threshold Q* = "
                   f"{low.threshold}, p=0.5 status {high.status}")


def test_criterion_08_hilbert_identity(report):
    rep = xi_report(2 ** 16)
    ok = rep.sign_agreement >= 0.99 and max(rep.zero_errors_cells) <= 1.0 and rep.skew_defect <= 1e-8
    assert verdict(report, 8, ok, f"sign agreement {rep.sign_agreement:.5f} >= 0.99; zeros "
                                  f"{rep.zeros[0]:.6f}, {rep.zeros[1]:.6f} within "
                                  f"{max(rep.zero_errors_cells):.3f} cells; skew defect "
                                  f"{rep.skew_defect:.2e} <= 1e-8")


def test_criterion_09_remodeling(report, quad8):
    base, bumped = (3, 5, 7), (5, 7, 9)
    rng = np.random.default_rng(9)
    r = remodel(quad8, ProliferationSchedule(base))
    d0 = distribution_distance(r).weighted_distance
    d1 = distribution_distance(remodel(quad8, ProliferationSchedule(bumped))).weighted_distance
    ratio = d1 / d0
    red = red_interval_identity(r, rng=rng)
    dbl = w_doubling(r, rng=rng).constant
    parts = {"sup-CDF distance <= 0.05": d0 <= 0.05,
             "halves when n_j += 2 (ratio in [0.25, 0.75])": 0.25 <= ratio <= 0.75,
             "red-interval set equality": red.equal,
             "W doubling <= 8": dbl <= 8.0}
    ok = all(parts.values())
    failed = [k for k, v in parts.items() if not v]
    assert verdict(report, 9, ok, f"distance {d0:.5f} -> {d1:.5f} (ratio {ratio:.4f}); red "
                                  f"intervals {red.red_paths} paths, {red.mismatches} mismatches; "
                                  f"W doubling {dbl:.3f}"
                   + (f"; failed: {failed}" if failed else ""))


def test_criterion_10_anticoncentration(report):
    t0 = time.perf_counter()
    results = []
    for m in (16, 64, 256):
        th = np.full(m, 1 / math.sqrt(m))
        results += lemma83_sweep(th, [-2.0, 0.0, 2.0], 1_000_000, DELTA, seed=1000 + m)
    dt = time.perf_counter() - t0
    worst = min(r.estimate - r.half_width for r in results)
    ok = all(r.passed for r in results) and dt < 120
    assert verdict(report, 10, ok, f"frozen delta {DELTA} (calibrated {calibrate_delta(samples=100_000):.2f}); "
                                   f"min(estimate - 99% CI half-width) = {worst:.4f} >= {DELTA} over "
                                   f"m in (16, 64, 256), a in (-2, 0, 2); runtime {dt:.1f}s < 120s")
