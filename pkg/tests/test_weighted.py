import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from a1bellman.dyadic import DyadicStepFunction, TransformSpec
from a1bellman.unweighted import DomainError, UnweightedDP
from a1bellman.weighted import (ReducedPoint, WeightedBellmanPoint, WeightedDP, best_root,
                                bookkeeping_lhs, bookkeeping_witness, check_monotone_in_m,
                                check_weighted_main_inequality, compare_with_unweighted,
                                empirical_weak_norm_ratio, expand, finite_depth_defects,
                                fit_log_growth, full_from_reduced, grid_tolerance,
                                monotone_in_m_defects, quadratic_form_sample, reduce,
                                verify_weighted_obstacle, weak_ratio, weighted_witness)


def test_reduce_example():
    assert reduce(WeightedBellmanPoint(2, 3, 1, 1, 2)) == ReducedPoint(1.0, 3.0, 0.5)


@given(st.floats(0.1, 10), st.floats(0.1, 10))
def test_reduce_homogeneities(s, t):
    p = WeightedBellmanPoint(2.0, 3.0, 1.0, 1.0, 2.0)
    r = reduce(p)
    a = reduce(WeightedBellmanPoint(s * 2.0, s * 3.0, s * 1.0, 1.0, 2.0))
    b = reduce(WeightedBellmanPoint(t * 2.0, 3.0, 1.0, t * 1.0, t * 2.0))
    for q in (a, b):
        assert q.alpha == pytest.approx(r.alpha) and q.beta == pytest.approx(r.beta)
        assert q.gamma == pytest.approx(r.gamma)
    back = reduce(expand(r, m=s, lam=t))
    assert back.alpha == pytest.approx(r.alpha) and back.gamma == pytest.approx(r.gamma)


def test_point_domain_errors():
    with pytest.raises(DomainError):
        WeightedBellmanPoint(0.5, 2.0, 1.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        WeightedBellmanPoint(1.0, 5.0, 1.0, 0.0, 1.0, Q=4.0)
    with pytest.raises(DomainError):
        reduce(WeightedBellmanPoint(1.0, 1.0, 1.0, 0.0, -1.0))


def test_zero_displacement_main_inequality():
    B = lambda F, w, m, f, lam: F * w
    P = WeightedBellmanPoint(1.0, 2.0, 1.0, 0.5, 1.0)
    assert check_weighted_main_inequality(B, P, P, P) == 0.0
    assert check_weighted_main_inequality(B, P, P, P, P, P) == 0.0


def test_main_inequality_rejects_bad_split():
    B = lambda F, w, m, f, lam: 0.0
    P = WeightedBellmanPoint(1.0, 2.0, 1.0, 0.0, 1.0)
    A = WeightedBellmanPoint(1.2, 2.0, 1.0, 0.3, 1.3)
    C = WeightedBellmanPoint(0.8, 2.0, 1.0, -0.3, 0.7)
    assert check_weighted_main_inequality(B, P, A, C) == 0.0
    with pytest.raises(DomainError):
        check_weighted_main_inequality(B, P, A, A)
    with pytest.raises(DomainError):
        check_weighted_main_inequality(B, P, A)


def test_monotone_in_m_power():
    P = WeightedBellmanPoint(1.0, 2.0, 1.0, 0.0, 1.0)
    dec = lambda F, w, m, f, lam: w / m
    inc = lambda F, w, m, f, lam: m
    assert check_monotone_in_m(dec, P, 1.0)
    assert check_monotone_in_m(dec, P, 1.5)
    assert not check_monotone_in_m(inc, P, 1.5)
    with pytest.raises(ValueError):
        check_monotone_in_m(dec, P, 0.5)


def test_full_from_reduced_negative_level():
    B = full_from_reduced(lambda a, b, g: np.zeros_like(a))
    assert B(1.0, 3.0, 1.0, 0.0, -1.0) == 3.0
    assert B(1.0, 3.0, 1.0, 0.0, 1.0) == 0.0


def test_dp_constructor_errors():
    with pytest.raises(ValueError):
        WeightedDP(0.5)
    with pytest.raises(ValueError):
        WeightedDP(2.0, pattern="triadic")


def test_small_dp_bounds_and_monotonicity(small_wdp):
    alpha, beta, gamma = small_wdp.node_states()
    for k in range(small_wdp.depth + 1):
        lv = small_wdp.levels[k]
        assert np.all(lv >= 0)
        assert np.all(lv <= beta + 1e-12)
        if k:
            assert np.all(lv >= small_wdp.levels[k - 1])


def test_small_dp_even_in_gamma(small_wdp):
    a = np.linspace(0.1, 2.5, 7)
    g = 0.6 * a
    for k in range(small_wdp.depth + 1):
        assert np.allclose(small_wdp.reduced_value(a, 2.0, g, k), small_wdp.reduced_value(a, 2.0, -g, k))


def test_small_dp_inequalities(small_wdp, rng):
    k = small_wdp.depth
    tol = grid_tolerance(small_wdp, k)
    d = finite_depth_defects(small_wdp, k, 2000, rng, "mi")
    assert d.size > 1000 and d.min() >= -tol
    d = monotone_in_m_defects(small_wdp, k, 2000, rng)
    assert d.size > 500 and d.min() >= -tol


def test_defect_kinds_need_matching_pattern(small_wdp, rng):
    with pytest.raises(ValueError):
        finite_depth_defects(small_wdp, 1, 10, rng, "3conc")
    with pytest.raises(ValueError):
        finite_depth_defects(small_wdp, 1, 10, rng, "4conc")


def test_q1_matches_unweighted_small():
    udp = UnweightedDP(n_u=17, n_z=33).run(2)
    wdp = WeightedDP(1.0, n_s=33, n_u=17, n_a=9, n_t=9).run(2)
    for k in range(3):
        tol = grid_tolerance(wdp, k) + udp.grid_tolerance(k) + 1e-12
        assert compare_with_unweighted(wdp, udp, k) <= tol
    with pytest.raises(ValueError):
        compare_with_unweighted(WeightedDP(2.0), udp, 0)


@pytest.mark.parametrize("Q", [4.0, 16.0, 64.0])
def test_weighted_obstacle(Q):
    rep = verify_weighted_obstacle(Q)
    assert rep.passed and rep.ratio >= 1 / 3
    assert rep.reduced.beta <= Q


def test_weighted_obstacle_errors():
    with pytest.raises(ValueError):
        verify_weighted_obstacle(1.0)
    with pytest.raises(ValueError):
        verify_weighted_obstacle(4.0, a=1.0, b=0.5)


def test_quadratic_form_of_affine_function():
    B = lambda a, b, g: 2 * a - 3 * b + 0.5 * g
    s = quadratic_form_sample(B, ReducedPoint(1.0, 2.0, 0.3), (0.01, 0.01, 0.01))
    for key in ("Baa", "Bbb", "Bgg", "Bab", "psi"):
        assert s.derivs[key] == pytest.approx(0, abs=1e-8)
    assert s.K == pytest.approx(0, abs=1e-8)
    assert s.L == pytest.approx(2 * 2.0 * 1.0, abs=1e-8)
    assert s.N == pytest.approx(-2 * 0.3 * 0.5 - 2 * 2.0 * 1.0, abs=1e-8)


def test_quadratic_form_even_function_has_zero_gamma_slope():
    B = lambda a, b, g: -(a - 1) ** 2 - g ** 2 + np.log(b)
    s = quadratic_form_sample(B, ReducedPoint(1.0, 2.0, 0.0), (0.01, 0.01, 0.01))
    assert s.derivs["Bg"] == pytest.approx(0, abs=1e-10)


def test_weak_ratio_of_zero_transform():
    phi = DyadicStepFunction(2, [1.0, -1.0, 2.0, 0.5])
    w = DyadicStepFunction(2, [1.0, 2.0, 2.0, 1.0])
    assert weak_ratio(phi, w, TransformSpec.constant(1, 0.0)) == 0.0


def test_witness_is_certified(small_wdp):
    root = best_root(small_wdp, 2)
    wit = weighted_witness(small_wdp, root, 2)
    assert wit.phi.depth == 4
    res = empirical_weak_norm_ratio(4.0, 2, dp=small_wdp, candidates=4)
    assert res.a1 <= 4.0 + 1e-9 and res.ratio > 0


def test_fit_log_growth_recovers_exponent():
    Qs = np.array([2.0, 4.0, 8.0, 16.0, 32.0])
    p, (lo, hi) = fit_log_growth(Qs, 0.7 * np.log(Qs) ** 0.3)
    assert p == pytest.approx(0.3) and lo <= 0.3 <= hi


def test_bookkeeping():
    r = bookkeeping_witness(0.1)
    assert r.status == "contradiction" and r.threshold is not None
    assert np.all(r.lhs[r.Qs >= r.threshold] > 1)
    assert bookkeeping_witness(0.5).status != "contradiction"
    # log 2 < 1 inflates the left side at Q = 2 for every p; the run from Q = 4 on stays below 1
    assert np.all(bookkeeping_lhs(2.0 ** np.arange(2, 61), 0.5) <= 1)
    with pytest.raises(ValueError):
        bookkeeping_witness(1.5)
    with pytest.raises(ValueError):
        bookkeeping_witness(0.1, [0.5, 2.0])
