import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from a1bellman.dyadic import DyadicStepFunction
from a1bellman.weights import (A1Weight, a1_argmax, a1_constant, build_obstacle_weight,
                               doubling_report, random_a1_weight, step_weight)


def brute_a1(values):
    """Enumerate every dyadic interval directly from the values."""
    n = len(values)
    best = 0.0
    size = n
    while size >= 1:
        for lo in range(0, n, size):
            block = values[lo:lo + size]
            best = max(best, sum(block) / size / min(block))
        size //= 2
    return best


def test_constant_weight_has_constant_one():
    assert a1_constant(DyadicStepFunction.constant(3.0, 4)) == 1.0


@pytest.mark.parametrize("Q", [1.0, 2.0, 8.0, 100.0])
def test_step_weight_constant(Q):
    assert a1_constant(step_weight(Q)) == pytest.approx(Q)


def test_quarter_spike_weight():
    w = DyadicStepFunction(2, [4.0, 1.0, 1.0, 1.0])
    assert a1_constant(w) == pytest.approx(2.5)
    assert brute_a1(list(w.values)) == pytest.approx(2.5)
    arg = a1_argmax(w)
    assert (arg.depth, arg.index) == (1, 0)


def test_rejects_nonpositive_weight():
    with pytest.raises(ValueError):
        a1_constant(DyadicStepFunction(1, [1.0, 0.0]))


def test_doubling_of_constant():
    assert doubling_report(DyadicStepFunction.constant(2.0, 3)).constant == 1.0


@pytest.mark.parametrize("Q", [2.0, 5.0])
def test_doubling_of_step_weight_is_sibling_ratio(Q):
    rep = doubling_report(step_weight(Q))
    assert rep.constant == pytest.approx(2 * Q - 1)
    assert rep.worst_pair[0] == "siblings"


@pytest.mark.parametrize("Q", [2.0, 4.0, 8.0, 16.0])
def test_obstacle_weight(Q):
    w = build_obstacle_weight(Q, 2)
    assert list(w.values) == [1.0, Q, Q, 1.0]
    assert w.a1Constant == pytest.approx(brute_a1(list(w.values)))
    assert w.a1Constant <= Q
    rep = doubling_report(w.w)
    assert rep.constant <= 2 * Q - 1 and rep.worst_pair is not None


def test_obstacle_weight_at_q_one():
    assert np.all(build_obstacle_weight(1.0, 3).values == 1.0)


def test_four_adic_arity():
    w = np.array([1.0, 2.0, 3.0, 2.0])
    rep = doubling_report(w, arity=4, siblings=False)
    assert rep.constant == pytest.approx(2.0)
    with pytest.raises(ValueError):
        doubling_report(w, arity=3)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 6), st.integers(0, 10_000), st.floats(0.01, 3.0))
def test_random_weight_properties(depth, seed, scale):
    w = random_a1_weight(depth, np.random.default_rng(seed))
    Q = w.a1Constant
    assert Q >= 1.0
    assert Q == pytest.approx(brute_a1(list(w.values)))
    assert a1_constant(w.w * scale) == pytest.approx(Q)
    assert doubling_report(w.w).constant <= 2 * Q - 1 + 1e-9


def test_a1_equals_one_only_for_constants(rng):
    w = DyadicStepFunction(3, rng.uniform(1, 2, 8))
    assert a1_constant(w) > 1.0


def test_json_cross_check_on_load():
    w = A1Weight(DyadicStepFunction(1, [3.0, 1.0]))
    doc = json.loads(w.dumps())
    assert A1Weight.from_json(doc).a1 == pytest.approx(2.0)
    doc["a1Constant"] = 5.0
    with pytest.raises(ValueError):
        A1Weight.from_json(doc)
