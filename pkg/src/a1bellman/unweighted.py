"""Unweighted weak-type Bellman function for dyadic martingale transforms.

The exact function is

    B(F, f, lam) = 1                                 if lam <= F
                 = 1 - (lam - F)**2 / (lam**2 - f**2)  if lam > F

on {|f| <= F}.  The finite-depth suprema N_k are computed by dynamic programming.
Both B and N_k are invariant under (F, f, lam) -> (tF, tf, t lam) and even in f, so
the DP runs on the compact reduced square

    u = |f| / F in [0, 1],   z = lam / (F + lam) in [0, 1]     (lam >= 0),

while lam < 0 always gives the value 1 (the zero transform is admissible).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dyadic import (DyadicStepFunction, TransformSpec, martingale_transform,
                     weighted_level_set_measure)
from .grids import ValueGrid3, interp_unit

log = logging.getLogger(__name__)

DEFAULT_BOX = ((0.0, 3.0), (-3.0, 3.0), (0.1, 4.0))


class DomainError(ValueError):
    pass


class StencilError(ValueError):
    pass


@dataclass(frozen=True)
class BellmanPoint:
    F: float
    f: float
    lam: float

    def __post_init__(self):
        if abs(self.f) > self.F + 1e-12:
            raise DomainError(f"|f| = {abs(self.f)} exceeds F = {self.F}")

    def __iter__(self):
        return iter((self.F, self.f, self.lam))


def _unpack(p, f=None, lam=None):
    if f is None:
        if isinstance(p, BellmanPoint):
            return p.F, p.f, p.lam
        p = np.asarray(p, dtype=float)
        return p[..., 0], p[..., 1], p[..., 2]
    return p, f, lam


def closed_form_B(p, f=None, lam=None):
    F, f, lam = (np.asarray(a, dtype=float) for a in _unpack(p, f, lam))
    if np.any(np.abs(f) > F + 1e-12):
        raise DomainError("point outside {|f| <= F}")
    F, f, lam = np.broadcast_arrays(F, f, lam)
    out = np.ones(F.shape)
    hi = lam > F
    den = lam[hi] ** 2 - f[hi] ** 2
    if np.any(den <= 0):
        raise DomainError("degenerate point lam = |f| > F")
    out[hi] = 1.0 - (lam[hi] - F[hi]) ** 2 / den
    return out if out.ndim else float(out)


def closed_form_M(F, y1, y2):
    """B in the coordinates y1 = (lam + f)/2, y2 = (lam - f)/2."""
    return closed_form_B(F, np.asarray(y1) - y2, np.asarray(y1) + y2)


def n0_exact(F, f, lam):
    """Depth-0 supremum: only the root Haar term, |(phi, h)/sqrt|I|| <= F."""
    F, f, lam = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (F, f, lam)))
    out = np.where(lam < 0, 1.0, np.where(lam < F, 0.5, 0.0))
    return out if out.ndim else float(out)


def simulate_n0(F: float, f: float, lam: float, n: int = 401,
                eps_values=(-1.0, 1.0)) -> float:
    """Brute force over half-averages (p, q) with (p+q)/2 = f, (|p|+|q|)/2 <= F."""
    if abs(f) > F:
        raise DomainError("point outside {|f| <= F}")
    best = 0.0
    for beta in np.linspace(-F, F, n):
        p, q = f - beta, f + beta
        if 0.5 * (abs(p) + abs(q)) > F + 1e-12:
            continue
        for e in eps_values:
            # transform is e*beta on the right half, -e*beta on the left half
            meas = 0.5 * (e * beta > lam) + 0.5 * (-e * beta > lam)
            best = max(best, meas)
    return best


# --------------------------------------------------------------------------
# main inequality and bi-concavity


def _pattern_sign(P, Pp, Pm, tol=1e-12):
    a1, a2 = Pp.F - P.F, P.F - Pm.F
    b1, b2 = Pp.f - P.f, P.f - Pm.f
    if abs(a1 - a2) > tol or abs(b1 - b2) > tol:
        raise DomainError("P is not the midpoint of P+ and P- in (F, f)")
    for sign in (1.0, -1.0):
        if abs(Pp.lam - P.lam - sign * b1) <= tol and abs(P.lam - Pm.lam - sign * b1) <= tol:
            return sign
    raise DomainError("lambda displacement must be +beta or -beta")


def check_main_inequality(Bfn, P: BellmanPoint, Pp: BellmanPoint, Pm: BellmanPoint) -> float:
    """B(P) - (B(P+) + B(P-))/2 for a (mi1)/(mi2)-type triple."""
    _pattern_sign(P, Pp, Pm)
    return float(Bfn(*P) - 0.5 * (Bfn(*Pp) + Bfn(*Pm)))


def random_admissible_triples(n: int, rng: np.random.Generator, F_max: float = 3.0,
                              lam_range=(-1.0, 6.0), above_obstacle: bool = False):
    """Random P with both (P+, P-) in {|f| <= F}; returns arrays and lambda signs."""
    F = rng.uniform(0.0, F_max, n)
    f = rng.uniform(-1.0, 1.0, n) * F
    if above_obstacle:
        lam = F + rng.uniform(0.0, lam_range[1], n)
    else:
        lam = rng.uniform(*lam_range, n)
    alpha = rng.uniform(-1.0, 1.0, n) * F
    Fp, Fm = F + alpha, F - alpha
    lo = np.maximum(-Fp - f, f - Fm)
    hi = np.minimum(Fp - f, f + Fm)
    beta = lo + rng.uniform(0.0, 1.0, n) * (hi - lo)
    sign = rng.choice([-1.0, 1.0], n)
    return F, f, lam, alpha, beta, sign


def main_inequality_defects(Bfn, F, f, lam, alpha, beta, sign, inner=None):
    """Vectorised B(P) - mean(B(P+), B(P-)); ``inner`` evaluates the children
    (defaults to Bfn), which allows the finite-depth form N_k(P) vs N_{k-1}(P+-)."""
    inner = Bfn if inner is None else inner
    Fp, fp = F + alpha, np.clip(f + beta, -(F + alpha), F + alpha)
    Fm, fm = F - alpha, np.clip(f - beta, -(F - alpha), F - alpha)
    return Bfn(F, f, lam) - 0.5 * (inner(Fp, fp, lam + sign * beta) + inner(Fm, fm, lam - sign * beta))


def biconcavity_defect(Mfn, point, direction, plane: str = "y1", h: float = 1e-3) -> float:
    """Second difference of M(F, y1, y2) along ``direction`` = (dF, dy) inside the
    (F, y1) or (F, y2) plane.  Non-positive for the Bellman function."""
    F, y1, y2 = point
    dF, dy = direction
    if plane == "y1":
        step = np.array([dF, dy, 0.0])
    elif plane == "y2":
        step = np.array([dF, 0.0, dy])
    else:
        raise ValueError("plane must be 'y1' or 'y2'")
    p0 = np.array([F, y1, y2], dtype=float)
    pts = [p0 - h * step, p0, p0 + h * step]
    for q in pts:
        if abs(q[1] - q[2]) > q[0] + 1e-15:
            raise StencilError(f"stencil point {q} leaves |y1 - y2| <= F")
    m = [float(Mfn(*q)) for q in pts]
    return m[0] - 2 * m[1] + m[2]


def weak_type_ratio(Bfn, F, f, lam):
    """lam * B / F, the quantity bounded by the weak-type constant."""
    return lam * Bfn(F, f, lam) / F


# --------------------------------------------------------------------------
# finite-depth dynamic programming


def _reduce(F, f, lam):
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.clip(np.abs(f) / F, 0.0, 1.0)
        z = lam / (F + lam)
    return u, z


@dataclass
class SplitChoice:
    value: float
    s: float
    t: float
    eps: float


class UnweightedDP:
    """N_0, ..., N_k on the reduced (u, z) square.

    Split search: alpha = s*F with s on a symmetric grid of ``n_alpha`` values in
    [-1, 1]; beta runs over ``n_beta`` values of its admissible interval;
    eps over {-1, +1} (``eps_class='pm1'``) or five values of [-1, 1]
    (``'interval'``).  The argmax is refined locally ``refine`` times.
    """

    def __init__(self, n_u: int = 65, n_z: int = 129, n_alpha: int = 33, n_beta: int = 33,
                 eps_class: str = "pm1", refine: int = 2, chunk: int = 256):
        if eps_class not in ("pm1", "interval"):
            raise ValueError("eps_class must be 'pm1' or 'interval'")
        if min(n_u, n_z) < 3 or min(n_alpha, n_beta) < 3:
            raise ValueError("resolution too coarse")
        self.n_u, self.n_z = n_u, n_z
        self.n_alpha, self.n_beta = n_alpha, n_beta
        self.eps_class = eps_class
        self.eps_values = np.array([-1.0, 1.0]) if eps_class == "pm1" else np.linspace(-1, 1, 5)
        self.refine = refine
        self.chunk = chunk
        self.u = np.linspace(0.0, 1.0, n_u)
        self.z = np.linspace(0.0, 1.0, n_z)
        self.levels: list[np.ndarray] = []

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    # evaluation ------------------------------------------------------------
    def value(self, F, f, lam, k: int):
        """N_k at arbitrary points (k = -1: no transform at all)."""
        F, f, lam = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (F, f, lam)))
        if k == -1:
            out = (lam < 0).astype(float)
        elif k == 0:
            out = np.asarray(n0_exact(F, f, lam), dtype=float)
        else:
            if k > self.depth:
                raise ValueError(f"level {k} not computed (have {self.depth})")
            out = np.where(lam < 0, 1.0, 0.0)
            live = (lam >= 0) & (F > 1e-300)
            if np.any(live):
                u, z = _reduce(F[live], f[live], lam[live])
                out[live] = interp_unit(self.levels[k], (u, z))
        return out if out.ndim else float(out)

    def _children(self, F, f, lam, s, t, e):
        a = s * F
        Fp, Fm = F + a, F - a
        lo = np.maximum(-Fp - f, f - Fm)
        hi = np.minimum(Fp - f, f + Fm)
        b = lo + t * (hi - lo)
        return (Fp, f + b, lam - e * b), (Fm, f - b, lam + e * b)

    def _split_values(self, F, f, lam, s, t, e, k_prev):
        (Fp, fp, lp), (Fm, fm, lm) = self._children(F, f, lam, s, t, e)
        return 0.5 * (self.value(Fp, fp, lp, k_prev) + self.value(Fm, fm, lm, k_prev))

    def best_split(self, F, f, lam, k_prev: int):
        """Best split of each state against N_{k_prev}; returns value, s, t, eps arrays."""
        F, f, lam = (np.asarray(a, dtype=float).ravel() for a in (F, f, lam))
        S, T, E = np.meshgrid(np.linspace(-1, 1, self.n_alpha), np.linspace(0, 1, self.n_beta),
                              self.eps_values, indexing="ij")
        S, T, E = S.ravel()[None, :], T.ravel()[None, :], E.ravel()[None, :]
        val = np.empty(F.size)
        bs, bt, be = np.empty(F.size), np.empty(F.size), np.empty(F.size)
        for lo in range(0, F.size, self.chunk):
            sl = slice(lo, lo + self.chunk)
            Fc, fc, lc = F[sl, None], f[sl, None], lam[sl, None]
            v = self._split_values(Fc, fc, lc, S, T, E, k_prev)
            j = np.argmax(v, axis=1)
            r = np.arange(j.size)
            val[sl], bs[sl], bt[sl], be[sl] = v[r, j], S[0, j], T[0, j], E[0, j]
        ds, dt = 2.0 / (self.n_alpha - 1), 1.0 / (self.n_beta - 1)
        loc = np.linspace(-1, 1, 7)
        LS, LT = np.meshgrid(loc, loc, indexing="ij")
        LS, LT = LS.ravel()[None, :], LT.ravel()[None, :]
        for _ in range(self.refine):
            for lo in range(0, F.size, self.chunk):
                sl = slice(lo, lo + self.chunk)
                s_c = np.clip(bs[sl, None] + ds * LS, -1, 1)
                t_c = np.clip(bt[sl, None] + dt * LT, 0, 1)
                e_c = np.broadcast_to(be[sl, None], s_c.shape)
                v = self._split_values(F[sl, None], f[sl, None], lam[sl, None], s_c, t_c, e_c, k_prev)
                j = np.argmax(v, axis=1)
                r = np.arange(j.size)
                better = v[r, j] > val[sl]
                idx = np.nonzero(better)[0] + lo
                val[idx] = v[r, j][better]
                bs[idx], bt[idx] = s_c[r, j][better], t_c[r, j][better]
            ds, dt = ds / 3, dt / 3
        return val, bs, bt, be

    def node_states(self):
        U, Z = np.meshgrid(self.u, self.z, indexing="ij")
        F = 1.0 - Z
        return F, U * F, Z

    def run(self, k: int) -> "UnweightedDP":
        F, f, lam = self.node_states()
        if not self.levels:
            self.levels.append(np.asarray(n0_exact(F, f, lam)))
        while self.depth < k:
            nxt = np.zeros_like(F)
            live = F > 0
            v, *_ = self.best_split(F[live], f[live], lam[live], self.depth)
            nxt[live] = v
            # a deeper tree never hurts: keep N_{k+1} >= N_k at the nodes
            nxt = np.maximum(nxt, self.levels[-1])
            self.levels.append(nxt)
            log.info("unweighted level %d done: max %.4f", self.depth, nxt.max())
        return self

    # outputs ---------------------------------------------------------------
    def to_value_grid(self, k: int, box=DEFAULT_BOX, resolution: int = 65) -> ValueGrid3:
        axes = tuple(np.linspace(lo, hi, resolution) for lo, hi in box)
        F, f, lam = np.meshgrid(*axes, indexing="ij")
        vals = np.full(F.shape, np.nan)
        ok = np.abs(f) <= F + 1e-12
        vals[ok] = self.value(F[ok], f[ok], lam[ok], k)
        meta = {"k": k, "box": [list(b) for b in box], "resolution": resolution,
                "reduced_grid": [self.n_u, self.n_z], "split_grid": [self.n_alpha, self.n_beta],
                "eps_class": self.eps_class}
        return ValueGrid3(axes, vals, ("F", "f", "lambda"), meta)

    def interpolation_tolerance(self, k: int) -> float:
        """Largest jump between neighbouring nodes of the level-k reduced grid:
        a bound for how far multilinear interpolation can move a value."""
        g = self.levels[k]
        return float(max(np.abs(np.diff(g, axis=0)).max(), np.abs(np.diff(g, axis=1)).max()))

    def aposteriori_tolerance(self, k: int, n: int = 400, seed: int = 12345) -> float:
        """Gap between the interpolated N_k and a direct split against N_{k-1} at
        random off-node points of the reduced square."""
        if k <= 0:
            return 0.0
        rng = np.random.default_rng(seed)
        u = rng.uniform(0.0, 1.0, n)
        z = rng.uniform(0.0, 0.98, n)
        F, f, lam = np.ones(n), u, z / (1 - z)
        interp = np.asarray(self.value(F, f, lam, k))
        direct, *_ = self.best_split(F, f, lam, k - 1)
        direct = np.maximum(direct, self.value(F, f, lam, k - 1))
        return float(np.max(np.abs(interp - direct)))

    def grid_tolerance(self, k: int) -> float:
        """Error bound for N_k: the Bellman step is 1-Lipschitz in the sup norm,
        so the one-step interpolation errors of levels 1..k add up."""
        return float(sum(self.aposteriori_tolerance(j) for j in range(1, k + 1)))


def brute_force_Nk(k: int, box=DEFAULT_BOX, resolution: int = 65, dp: UnweightedDP | None = None,
                   **dp_kwargs) -> ValueGrid3:
    if k < 0:
        raise ValueError("k must be >= 0")
    (F0, F1), (f0, f1), (l0, l1) = box
    if F0 < 0 or l0 > l1 or F0 > F1 or f0 > f1:
        raise DomainError("box must lie inside {F >= 0}")
    dp = dp or UnweightedDP(**dp_kwargs)
    dp.run(k)
    return dp.to_value_grid(k, box, resolution)


def verify_obstacle(Bfn, samples) -> dict:
    """Sup deficiency 1 - B over samples with lam < F."""
    F, f, lam = (np.asarray(a, dtype=float) for a in samples)
    if np.any(lam >= F):
        raise DomainError("obstacle samples need lam < F")
    vals = np.asarray(Bfn(F, f, lam), dtype=float)
    return {"n": int(F.size), "max_deficiency": float(np.max(1.0 - vals)),
            "min_value": float(vals.min())}


def obstacle_sequence(dp: UnweightedDP, point, ks) -> list[float]:
    return [float(dp.value(*point, k)) for k in ks]


# --------------------------------------------------------------------------
# witness extraction


@dataclass
class Witness:
    phi: DyadicStepFunction
    spec: TransformSpec
    lam: float
    claimed: float

    @property
    def transform(self) -> DyadicStepFunction:
        return martingale_transform(self.phi, self.spec)

    def measure(self) -> float:
        return weighted_level_set_measure(self.transform, self.lam)


def witness_extremizer(dp: UnweightedDP, p, k: int) -> Witness:
    """Replay the DP argmax from p into an explicit (phi, eps) pair of depth k + 2."""
    F0, f0, lam0 = (float(x) for x in p)
    if abs(f0) > F0 + 1e-12:
        raise DomainError("point outside {|f| <= F}")
    if k > max(dp.depth, 0) and k > 0:
        raise ValueError(f"level {k} not computed")
    D = k + 2
    phi = np.zeros(2 ** D)
    eps = [np.zeros(2 ** d) for d in range(D)]
    stack = [(0, 0, F0, f0, lam0, k)]
    while stack:
        d, i, F, f, lam, lev = stack.pop()
        if lam < 0 or lev < 0 or F <= 0:
            n = 2 ** (D - d)
            cells = phi[i * n:(i + 1) * n]
            cells[: n // 2] = f + F
            cells[n // 2:] = f - F
            continue
        v, s, t, e = (x[0] for x in dp.best_split([F], [f], [lam], lev - 1))
        (Fp, fp, lp), (Fm, fm, lm) = dp._children(F, f, lam, s, t, e)
        eps[d][i] = e
        stack.append((d + 1, 2 * i + 1, Fp, fp, lp, lev - 1))
        stack.append((d + 1, 2 * i, Fm, fm, lm, lev - 1))
    spec = TransformSpec(D - 1, tuple(eps))
    return Witness(DyadicStepFunction(D, phi), spec, lam0, float(dp.value(F0, f0, lam0, k)))
