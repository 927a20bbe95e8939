"""Dyadic and four-adic lattices on [0, 1), step functions, Haar analysis and
martingale transforms.

Conventions
-----------
An interval is an integer pair ``(depth, index)`` standing for
``[index * 2**-depth, (index + 1) * 2**-depth)``.  The Haar function of ``I`` is
``+1/sqrt|I|`` on the right half ``I_+`` and ``-1/sqrt|I|`` on the left half
``I_-``.  Step functions are dense value vectors at a fixed depth.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np


class DepthError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class DyadicInterval:
    depth: int
    index: int

    def __post_init__(self):
        if self.depth < 0 or not 0 <= self.index < 2 ** self.depth:
            raise ValueError(f"no dyadic interval ({self.depth}, {self.index})")

    @property
    def length(self) -> float:
        return 2.0 ** -self.depth

    @property
    def left(self) -> float:
        return self.index * self.length

    @property
    def right(self) -> float:
        return (self.index + 1) * self.length

    @property
    def minus(self) -> "DyadicInterval":
        return DyadicInterval(self.depth + 1, 2 * self.index)

    @property
    def plus(self) -> "DyadicInterval":
        return DyadicInterval(self.depth + 1, 2 * self.index + 1)

    def children(self) -> tuple["DyadicInterval", "DyadicInterval"]:
        return self.minus, self.plus

    @property
    def parent(self) -> "DyadicInterval":
        if self.depth == 0:
            raise ValueError("the unit interval has no parent")
        return DyadicInterval(self.depth - 1, self.index // 2)

    def contains(self, other: "DyadicInterval") -> bool:
        if other.depth < self.depth:
            return False
        return other.index >> (other.depth - self.depth) == self.index


def intervals(max_depth: int) -> Iterator[DyadicInterval]:
    for d in range(max_depth + 1):
        for i in range(2 ** d):
            yield DyadicInterval(d, i)


def block_reduce(values: np.ndarray, depth: int, op=np.mean) -> np.ndarray:
    """Reduce a depth-N vector to one number per depth-``depth`` interval."""
    n = values.shape[0]
    return op(values.reshape(2 ** depth, n // 2 ** depth), axis=1)


@dataclass(frozen=True, eq=False)
class DyadicStepFunction:
    depth: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.shape[0] != 2 ** self.depth:
            raise DepthError(f"need 2**{self.depth} values, got shape {v.shape}")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, c: float, depth: int = 0) -> "DyadicStepFunction":
        return cls(depth, np.full(2 ** depth, float(c)))

    @classmethod
    def indicator(cls, interval: DyadicInterval, depth: int | None = None) -> "DyadicStepFunction":
        depth = interval.depth if depth is None else depth
        if depth < interval.depth:
            raise DepthError("indicator finer than the requested depth")
        v = np.zeros(2 ** depth)
        k = depth - interval.depth
        v[interval.index << k:(interval.index + 1) << k] = 1.0
        return cls(depth, v)

    @classmethod
    def haar(cls, interval: DyadicInterval, depth: int | None = None) -> "DyadicStepFunction":
        depth = interval.depth + 1 if depth is None else depth
        if depth <= interval.depth:
            raise DepthError("Haar function needs one level below its interval")
        v = np.zeros(2 ** depth)
        k = depth - interval.depth - 1
        c = 1.0 / np.sqrt(interval.length)
        v[(2 * interval.index) << k:(2 * interval.index + 1) << k] = -c
        v[(2 * interval.index + 1) << k:(2 * interval.index + 2) << k] = c
        return cls(depth, v)

    def refine(self, depth: int) -> "DyadicStepFunction":
        if depth < self.depth:
            raise DepthError("cannot refine to a coarser depth")
        return DyadicStepFunction(depth, np.repeat(self.values, 2 ** (depth - self.depth)))

    def averages(self, depth: int) -> np.ndarray:
        if depth > self.depth:
            return np.repeat(self.values, 2 ** (depth - self.depth))
        return block_reduce(self.values, depth)

    def minima(self, depth: int) -> np.ndarray:
        if depth > self.depth:
            return np.repeat(self.values, 2 ** (depth - self.depth))
        return block_reduce(self.values, depth, np.min)

    def average(self, interval: DyadicInterval | None = None) -> float:
        if interval is None:
            return float(self.values.mean())
        return float(self.averages(interval.depth)[interval.index])

    def integral(self) -> float:
        return float(self.values.mean())

    def l2_norm(self) -> float:
        return float(np.sqrt(np.mean(self.values ** 2)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any((x < 0) | (x >= 1)):
            raise ValueError("x outside [0, 1)")
        return self.values[np.floor(x * 2 ** self.depth).astype(int)]

    def _coerce(self, other):
        if isinstance(other, DyadicStepFunction):
            d = max(self.depth, other.depth)
            return self.refine(d).values, other.refine(d).values, d
        return self.values, float(other), self.depth

    def __add__(self, other):
        a, b, d = self._coerce(other)
        return DyadicStepFunction(d, a + b)

    __radd__ = __add__

    def __sub__(self, other):
        a, b, d = self._coerce(other)
        return DyadicStepFunction(d, a - b)

    def __mul__(self, other):
        a, b, d = self._coerce(other)
        return DyadicStepFunction(d, a * b)

    __rmul__ = __mul__

    def __neg__(self):
        return DyadicStepFunction(self.depth, -self.values)

    def allclose(self, other: "DyadicStepFunction", atol: float = 1e-12) -> bool:
        a, b, _ = self._coerce(other)
        return bool(np.allclose(a, b, rtol=0.0, atol=atol))

    def to_json(self) -> dict:
        return {"depth": self.depth, "values": self.values.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "DyadicStepFunction":
        return cls(int(doc["depth"]), np.asarray(doc["values"], dtype=float))


@dataclass(frozen=True, eq=False)
class HaarSystem:
    """Mean plus the pairings ``(f, h_J)``, stored per depth as dense vectors."""

    mean: float
    levels: tuple[np.ndarray, ...]

    @property
    def depth(self) -> int:
        return len(self.levels)

    def coefficient(self, interval: DyadicInterval) -> float:
        if interval.depth >= self.depth:
            return 0.0
        return float(self.levels[interval.depth][interval.index])

    @property
    def coefficients(self) -> dict[DyadicInterval, float]:
        return {DyadicInterval(d, i): float(c)
                for d, lev in enumerate(self.levels) for i, c in enumerate(lev)}

    def energy(self) -> float:
        return float(sum(np.sum(lev ** 2) for lev in self.levels))

    def reconstruct(self) -> DyadicStepFunction:
        n = self.depth
        vals = np.full(1, self.mean)
        for d, lev in enumerate(self.levels):
            # (f, h_J) h_J is +-c/sqrt|J| on the halves; |J| = 2**-d
            half = lev * 2.0 ** (d / 2)
            vals = np.stack([vals - half, vals + half], axis=1).ravel()
        return DyadicStepFunction(n, vals)


def haar_decompose(f: DyadicStepFunction) -> HaarSystem:
    levels = []
    avg = f.values
    # work from the finest level up: parent average and half-difference
    diffs = []
    for d in range(f.depth - 1, -1, -1):
        pairs = avg.reshape(-1, 2)
        # (f, h_J) = sqrt|J| / 2 * (<f>_{J+} - <f>_{J-})
        diffs.append(2.0 ** (-d / 2) * 0.5 * (pairs[:, 1] - pairs[:, 0]))
        avg = pairs.mean(axis=1)
    levels = tuple(reversed(diffs))
    return HaarSystem(float(avg[0]), levels)


def reconstruct(h: HaarSystem) -> DyadicStepFunction:
    return h.reconstruct()


@dataclass(frozen=True, eq=False)
class TransformSpec:
    """Multipliers eps_J in [-1, 1] for every interval of depth <= ``depth``."""

    depth: int
    levels: tuple[np.ndarray, ...] = field(default=())

    def __post_init__(self):
        if not self.levels:
            object.__setattr__(self, "levels",
                               tuple(np.zeros(2 ** d) for d in range(self.depth + 1)))
        if len(self.levels) != self.depth + 1:
            raise DepthError("one multiplier vector per depth 0..depth is required")
        levs = []
        for d, lev in enumerate(self.levels):
            lev = np.array(lev, dtype=float)
            if lev.shape != (2 ** d,):
                raise DepthError(f"depth {d} needs {2 ** d} multipliers")
            if np.any(np.abs(lev) > 1.0 + 1e-12):
                raise ValueError("multipliers must lie in [-1, 1]")
            lev.setflags(write=False)
            levs.append(lev)
        object.__setattr__(self, "levels", tuple(levs))

    @classmethod
    def constant(cls, depth: int, eps: float) -> "TransformSpec":
        return cls(depth, tuple(np.full(2 ** d, float(eps)) for d in range(depth + 1)))

    @classmethod
    def from_map(cls, depth: int, eps: dict) -> "TransformSpec":
        levels = [np.zeros(2 ** d) for d in range(depth + 1)]
        for key, val in eps.items():
            j = key if isinstance(key, DyadicInterval) else DyadicInterval(*key)
            levels[j.depth][j.index] = val
        return cls(depth, tuple(levels))

    def eps(self, interval: DyadicInterval) -> float:
        return float(self.levels[interval.depth][interval.index])


def martingale_transform(f: DyadicStepFunction, spec: TransformSpec) -> DyadicStepFunction:
    if spec.depth < f.depth - 1:
        raise DepthError(f"transform of depth {spec.depth} cannot act on a depth-{f.depth} function")
    h = haar_decompose(f)
    levels = tuple(spec.levels[d] * lev for d, lev in enumerate(h.levels))
    return HaarSystem(0.0, levels).reconstruct()


def weighted_level_set_measure(g: DyadicStepFunction, lam: float,
                               w: DyadicStepFunction | None = None,
                               strict: bool = True) -> float:
    """(1/|I0|) * integral of w over {g > lam} ({g >= lam} if not ``strict``)."""
    if w is None:
        w = DyadicStepFunction.constant(1.0, g.depth)
    if np.any(w.values < 0):
        raise ValueError("negative weight")
    if g.depth != w.depth:
        raise DepthError("level function and weight live at different depths")
    mask = g.values > lam if strict else g.values >= lam
    return float(np.sum(w.values[mask]) / w.values.shape[0])


# --------------------------------------------------------------------------
# four-adic lattice

H_PATTERN = np.array([-1.0, -1.0, 1.0, 1.0])
G_PATTERN = np.array([1.0, -1.0, -1.0, 1.0])


@dataclass(frozen=True, order=True)
class FourAdicInterval:
    depth: int
    index: int

    def __post_init__(self):
        if self.depth < 0 or not 0 <= self.index < 4 ** self.depth:
            raise ValueError(f"no four-adic interval ({self.depth}, {self.index})")

    @property
    def length(self) -> float:
        return 4.0 ** -self.depth

    @property
    def left(self) -> float:
        return self.index * self.length

    def children(self) -> tuple["FourAdicInterval", ...]:
        return tuple(FourAdicInterval(self.depth + 1, 4 * self.index + q) for q in range(4))

    @property
    def parent(self) -> "FourAdicInterval":
        return FourAdicInterval(self.depth - 1, self.index // 4)


@dataclass(frozen=True, eq=False)
class FourAdicMartingale:
    """``constant + sum_n sum_{gen(I)=n} coeff_I * P_I`` with P = H or G.

    ``coeffs[n]`` holds the 4**n coefficients of generation n, n < max_generation.
    The function is constant on the 4**max_generation cells of the last generation.
    """

    kind: str
    constant: float
    coeffs: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.kind not in ("H", "G"):
            raise ValueError("kind must be 'H' or 'G'")
        levs = []
        for n, c in enumerate(self.coeffs):
            c = np.array(c, dtype=float)
            if c.shape != (4 ** n,):
                raise DepthError(f"generation {n} needs {4 ** n} coefficients")
            c.setflags(write=False)
            levs.append(c)
        object.__setattr__(self, "coeffs", tuple(levs))

    @property
    def max_generation(self) -> int:
        return len(self.coeffs)

    @property
    def pattern(self) -> np.ndarray:
        return H_PATTERN if self.kind == "H" else G_PATTERN

    @classmethod
    def zero(cls, kind: str, generations: int, constant: float = 0.0) -> "FourAdicMartingale":
        return cls(kind, constant, tuple(np.zeros(4 ** n) for n in range(generations)))

    def coefficient(self, interval: FourAdicInterval) -> float:
        if interval.depth >= self.max_generation:
            return 0.0
        return float(self.coeffs[interval.depth][interval.index])

    def cell_values(self, generation: int | None = None) -> np.ndarray:
        """Values on the 4**generation cells (default: finest generation)."""
        n_gen = self.max_generation if generation is None else generation
        vals = np.full(1, self.constant)
        for n in range(n_gen):
            c = self.coeffs[n] if n < self.max_generation else np.zeros(4 ** n)
            vals = (vals[:, None] + c[:, None] * self.pattern[None, :]).ravel()
        return vals

    def averages(self, generation: int) -> np.ndarray:
        """Averages over generation-n intervals: the partial sum up to n - 1."""
        return self.cell_values(generation)

    def difference(self, n: int) -> np.ndarray:
        """The n-th martingale difference sampled on the finest cells."""
        fine = self.max_generation
        d = (self.coeffs[n][:, None] * self.pattern[None, :]).ravel()
        return np.repeat(d, 4 ** (fine - n - 1))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any((x < 0) | (x >= 1)):
            raise ValueError("x outside [0, 1)")
        out = np.full(x.shape, self.constant)
        for n, c in enumerate(self.coeffs):
            cell = np.floor(x * 4 ** (n + 1)).astype(np.int64)
            out = out + c[cell // 4] * self.pattern[cell % 4]
        return out

    def to_json(self) -> dict:
        rows = [[n, i, float(v)] for n, c in enumerate(self.coeffs)
                for i, v in enumerate(c) if v != 0.0]
        return {"kind": self.kind, "constant": self.constant,
                "generations": self.max_generation, "coeffs": rows}

    @classmethod
    def from_json(cls, doc: dict) -> "FourAdicMartingale":
        gens = int(doc.get("generations", 1 + max((r[0] for r in doc["coeffs"]), default=-1)))
        levels = [np.zeros(4 ** n) for n in range(gens)]
        for n, i, v in doc["coeffs"]:
            levels[int(n)][int(i)] = v
        return cls(doc["kind"], float(doc["constant"]), tuple(levels))


def evaluate_martingale(m: FourAdicMartingale, x):
    return m(x)


def dumps(obj) -> str:
    return json.dumps(obj.to_json())
