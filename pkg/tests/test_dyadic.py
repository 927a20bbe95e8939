import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from a1bellman.dyadic import (DepthError, DyadicInterval, DyadicStepFunction, FourAdicInterval,
                              FourAdicMartingale, G_PATTERN, H_PATTERN, TransformSpec,
                              evaluate_martingale, haar_decompose, martingale_transform,
                              reconstruct, weighted_level_set_measure)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def step_functions(draw, max_depth=6):
    d = draw(st.integers(0, max_depth))
    v = draw(arrays(float, 2 ** d, elements=finite))
    return DyadicStepFunction(d, v)


@st.composite
def specs(draw, depth):
    levels = tuple(draw(arrays(float, 2 ** d, elements=st.floats(-1, 1))) for d in range(depth + 1))
    return TransformSpec(depth, levels)


def test_interval_children_and_parent():
    I = DyadicInterval(2, 1)
    lo, hi = I.children()
    assert (lo.depth, lo.index, hi.index) == (3, 2, 3)
    assert lo.parent == I and I.contains(hi) and not hi.contains(I)
    assert I.left == 0.25 and I.length == 0.25
    with pytest.raises(ValueError):
        DyadicInterval(1, 2)


def test_haar_of_left_indicator():
    f = DyadicStepFunction.indicator(DyadicInterval(1, 0))
    h = haar_decompose(f)
    assert h.mean == 0.5
    assert h.coefficient(DyadicInterval(0, 0)) == pytest.approx(-0.5)


def test_haar_of_constant():
    h = haar_decompose(DyadicStepFunction.constant(3.0, 4))
    assert h.mean == 3.0
    assert all(v == 0 for v in h.coefficients.values())


def test_haar_of_root_haar_function():
    h = haar_decompose(DyadicStepFunction.haar(DyadicInterval(0, 0), 3))
    coeffs = h.coefficients
    assert h.mean == pytest.approx(0.0)
    assert coeffs[DyadicInterval(0, 0)] == pytest.approx(1.0)
    assert all(abs(v) < 1e-15 for J, v in coeffs.items() if J.depth > 0)


@given(step_functions())
def test_reconstruction_is_exact(f):
    assert reconstruct(haar_decompose(f)).allclose(f, atol=1e-9)


@given(step_functions())
def test_parseval(f):
    centred = f.values - f.values.mean()
    energy = float(np.mean(centred ** 2))
    assert haar_decompose(f).energy() == pytest.approx(energy, rel=1e-10, abs=1e-10)


def test_transform_zero_multipliers(rng):
    f = DyadicStepFunction(5, rng.normal(size=32))
    assert np.all(martingale_transform(f, TransformSpec(4)).values == 0)


def test_transform_unit_multipliers(rng):
    f = DyadicStepFunction(5, rng.normal(size=32))
    t = martingale_transform(f, TransformSpec.constant(4, 1.0))
    assert np.allclose(t.values, f.values - f.values.mean())


def test_transform_of_left_indicator_with_negative_multiplier():
    f = DyadicStepFunction.indicator(DyadicInterval(1, 0))
    t = martingale_transform(f, TransformSpec.constant(0, -1.0))
    # (f, h) = -1/2 and h = -1 on the left half, so the sign flip gives -1/2 there
    assert np.allclose(t.values, [-0.5, 0.5])


@settings(max_examples=50)
@given(st.data())
def test_transform_is_linear_with_zero_mean(data):
    f = data.draw(step_functions())
    g = DyadicStepFunction(f.depth, data.draw(arrays(float, 2 ** f.depth, elements=finite)))
    spec = data.draw(specs(max(f.depth - 1, 0)))
    a, b = 1.7, -0.3
    lhs = martingale_transform(f * a + g * b, spec)
    rhs = martingale_transform(f, spec) * a + martingale_transform(g, spec) * b
    assert lhs.allclose(rhs, atol=1e-9)
    assert abs(lhs.values.mean()) < 1e-9


@settings(max_examples=50)
@given(step_functions(), st.sampled_from([-1.0, 1.0]))
def test_pm1_transform_is_isometry(f, eps):
    t = martingale_transform(f, TransformSpec.constant(max(f.depth - 1, 0), eps))
    assert t.l2_norm() == pytest.approx(np.sqrt(np.mean((f.values - f.values.mean()) ** 2)),
                                        rel=1e-9, abs=1e-9)


def test_transform_depth_mismatch():
    with pytest.raises(DepthError):
        martingale_transform(DyadicStepFunction.constant(1.0, 4), TransformSpec(1))


def test_spec_rejects_large_multiplier():
    with pytest.raises(ValueError):
        TransformSpec(0, (np.array([1.5]),))


def test_level_set_examples():
    w = DyadicStepFunction(1, [3.0, 1.0])
    assert weighted_level_set_measure(DyadicStepFunction.constant(0.0, 1), 1.0, w) == 0.0
    assert weighted_level_set_measure(DyadicStepFunction.constant(2.0, 1), 1.0) == 1.0
    Q, F = 4.0, 2.0
    g = DyadicStepFunction(1, [F, 0.0])
    w = DyadicStepFunction(1, [2 * Q - 1, 1.0])
    assert weighted_level_set_measure(g, F / 2, w) == pytest.approx((2 * Q - 1) / 2)


def test_level_set_strict_flag():
    g = DyadicStepFunction(1, [1.0, 0.0])
    assert weighted_level_set_measure(g, 1.0) == 0.0
    assert weighted_level_set_measure(g, 1.0, strict=False) == 0.5


def test_level_set_rejects_negative_weight():
    with pytest.raises(ValueError):
        weighted_level_set_measure(DyadicStepFunction.constant(0.0, 1), 0.0,
                                   DyadicStepFunction(1, [1.0, -1.0]))


@given(step_functions(4), st.floats(-5, 5), st.floats(0, 3))
def test_level_set_monotone_and_additive(g, lam, dl):
    rng = np.random.default_rng(0)
    w1 = DyadicStepFunction(g.depth, rng.uniform(0, 2, 2 ** g.depth))
    w2 = DyadicStepFunction(g.depth, rng.uniform(0, 2, 2 ** g.depth))
    assert weighted_level_set_measure(g, lam + dl, w1) <= weighted_level_set_measure(g, lam, w1)
    total = weighted_level_set_measure(g, lam, w1 + w2)
    assert total == pytest.approx(weighted_level_set_measure(g, lam, w1)
                                  + weighted_level_set_measure(g, lam, w2))


def test_four_adic_patterns_have_zero_mean():
    assert H_PATTERN.sum() == 0 and G_PATTERN.sum() == 0
    assert FourAdicInterval(1, 3).children()[0] == FourAdicInterval(2, 12)


def test_martingale_constant():
    m = FourAdicMartingale.zero("H", 2, constant=1.5)
    assert np.all(m(np.linspace(0, 0.99, 20)) == 1.5)


def test_martingale_single_h_term():
    m = FourAdicMartingale("H", 0.0, (np.array([2.0]),))
    assert evaluate_martingale(m, 0.1) == -2.0 and evaluate_martingale(m, 0.6) == 2.0


def test_martingale_single_g_term():
    m = FourAdicMartingale("G", 0.0, (np.array([3.0]),))
    assert list(m(np.array([0.1, 0.3, 0.6, 0.9]))) == [3.0, -3.0, -3.0, 3.0]


def test_martingale_rejects_outside_points():
    with pytest.raises(ValueError):
        FourAdicMartingale.zero("H", 1)(1.0)


def test_differences_of_distinct_generations_are_orthogonal(rng):
    coeffs = tuple(rng.normal(size=4 ** n) for n in range(3))
    f = FourAdicMartingale("H", 0.0, coeffs)
    g = FourAdicMartingale("G", 0.0, tuple(rng.normal(size=4 ** n) for n in range(3)))
    for n in range(3):
        for k in range(3):
            if n != k:
                assert abs(np.mean(f.difference(n) * g.difference(k))) < 1e-12


def test_cell_values_match_pointwise_evaluation(rng):
    m = FourAdicMartingale("G", 0.3, tuple(rng.normal(size=4 ** n) for n in range(3)))
    x = (np.arange(64) + 0.5) / 64
    assert np.allclose(m.cell_values(), m(x))


def test_json_round_trips(rng):
    f = DyadicStepFunction(3, rng.normal(size=8))
    assert DyadicStepFunction.from_json(json.loads(json.dumps(f.to_json()))).allclose(f, 0)
    m = FourAdicMartingale("H", 1.0, tuple(rng.normal(size=4 ** n) for n in range(2)))
    back = FourAdicMartingale.from_json(json.loads(json.dumps(m.to_json())))
    assert np.array_equal(back.cell_values(), m.cell_values())
