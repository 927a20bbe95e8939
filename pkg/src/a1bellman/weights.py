"""Dyadic A1 weights: exact constants by enumeration, doubling, and the explicit
weight families used by the obstacle constructions."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dyadic import DyadicInterval, DyadicStepFunction, block_reduce


def _check_positive(w: DyadicStepFunction):
    if np.any(w.values <= 0):
        raise ValueError("weights must be strictly positive")


def a1_profile(w: DyadicStepFunction) -> list[np.ndarray]:
    """<w>_J / min_J w for every J, one vector per depth."""
    _check_positive(w)
    return [block_reduce(w.values, d) / block_reduce(w.values, d, np.min)
            for d in range(w.depth + 1)]


def a1_constant(w: DyadicStepFunction) -> float:
    return float(max(p.max() for p in a1_profile(w)))


def a1_argmax(w: DyadicStepFunction) -> DyadicInterval:
    best, arg = -1.0, None
    for d, p in enumerate(a1_profile(w)):
        i = int(np.argmax(p))
        if p[i] > best + 1e-15:
            best, arg = p[i], DyadicInterval(d, i)
    return arg


@dataclass(frozen=True, eq=False)
class A1Weight:
    w: DyadicStepFunction
    a1: float = float("nan")

    def __post_init__(self):
        _check_positive(self.w)
        object.__setattr__(self, "a1", a1_constant(self.w))

    @property
    def a1Constant(self) -> float:
        return self.a1

    @property
    def values(self) -> np.ndarray:
        return self.w.values

    @property
    def depth(self) -> int:
        return self.w.depth

    def to_json(self) -> dict:
        doc = self.w.to_json()
        doc["a1Constant"] = self.a1
        return doc

    @classmethod
    def from_json(cls, doc: dict, rtol: float = 1e-9) -> "A1Weight":
        out = cls(DyadicStepFunction.from_json(doc))
        cached = doc.get("a1Constant")
        if cached is not None and not np.isclose(cached, out.a1, rtol=rtol, atol=0):
            raise ValueError(f"stored a1Constant {cached} disagrees with recomputed {out.a1}")
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json())


@dataclass(frozen=True)
class DoublingReport:
    constant: float
    worstPair: tuple
    arity: int

    @property
    def worst_pair(self):
        return self.worstPair


def _tree_averages(values: np.ndarray, arity: int) -> list[np.ndarray]:
    n = values.shape[0]
    levels = int(round(np.log(n) / np.log(arity)))
    if arity ** levels != n:
        raise ValueError(f"{n} cells do not form a complete {arity}-adic tree")
    return [values.reshape(arity ** d, -1).mean(axis=1) for d in range(levels + 1)]


def doubling_report(w: DyadicStepFunction | np.ndarray, arity: int = 2,
                    siblings: bool = True) -> DoublingReport:
    """Largest ratio <w>_A / <w>_B over tree neighbours A, B (parent/child in both
    directions, and siblings unless ``siblings`` is False)."""
    if arity not in (2, 4):
        raise ValueError("arity must be 2 or 4")
    vals = w.values if isinstance(w, DyadicStepFunction) else np.asarray(w, dtype=float)
    avgs = _tree_averages(vals, arity)
    best, pair = 1.0, None
    for d in range(1, len(avgs)):
        child = avgs[d]
        parent = np.repeat(avgs[d - 1], arity)
        for num, den, tag in ((parent, child, "parent/child"), (child, parent, "child/parent")):
            r = num / den
            i = int(np.argmax(r))
            if r[i] > best:
                best = float(r[i])
                pair = (tag, (d - 1, i // arity), (d, i))
        if siblings:
            grp = child.reshape(-1, arity)
            r = grp.max(axis=1) / grp.min(axis=1)
            i = int(np.argmax(r))
            if r[i] > best:
                best = float(r[i])
                j_hi = int(np.argmax(grp[i])) + arity * i
                j_lo = int(np.argmin(grp[i])) + arity * i
                pair = ("siblings", (d, j_hi), (d, j_lo))
    return DoublingReport(best, pair, arity)


def build_obstacle_weight(Q: float, depth: int = 2) -> A1Weight:
    """1 on the outer quarters I_{--} and I_{++}, Q on the two middle quarters."""
    if Q < 1:
        raise ValueError("Q must be at least 1")
    if depth < 2:
        raise ValueError("the quarter structure needs depth >= 2")
    quarters = np.array([1.0, Q, Q, 1.0])
    return A1Weight(DyadicStepFunction(depth, np.repeat(quarters, 2 ** (depth - 2))))


def step_weight(Q: float, depth: int = 1) -> DyadicStepFunction:
    """2Q - 1 on [0, 1/2), 1 on [1/2, 1): the depth-0 extremal weight."""
    return DyadicStepFunction(1, np.array([2 * Q - 1, 1.0])).refine(depth)


def random_a1_weight(depth: int, rng: np.random.Generator, spread: float = 0.5) -> A1Weight:
    """Multiplicative cascade: each child is scaled by (1 +- delta_J), delta_J
    uniform in [0, spread).  The exact constant is recomputed afterwards."""
    if not 0 <= spread < 1:
        raise ValueError("spread must lie in [0, 1)")
    vals = np.ones(1)
    for d in range(depth):
        delta = rng.uniform(0, spread, size=vals.shape[0])
        sign = rng.choice([-1.0, 1.0], size=vals.shape[0])
        vals = np.stack([vals * (1 - sign * delta), vals * (1 + sign * delta)], axis=1).ravel()
    return A1Weight(DyadicStepFunction(depth, vals))
