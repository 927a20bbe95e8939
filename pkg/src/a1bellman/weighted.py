"""Weighted weak-type Bellman function under dyadic A1 weights.

Full variables (F, w, m, f, lam) with F = <|phi| w>, w = <w>, m a lower bound for
inf w, f = <phi> and lam the level.  The domain is F >= |f| m, m <= w <= Q m.
Homogeneity gives  B(F, w, m, f, lam) = m * B(F/(m lam), w/m, f/lam), so the
dynamic programming runs on the reduced variables (alpha, beta, gamma) with
|gamma| <= alpha and 1 <= beta <= Q.

Internally the reduced grid uses

    s = alpha / (1 + alpha)       in [0, 1]
    b = log(beta) / log(Q)        in [0, 1]
    u = |gamma| / alpha           in [0, 1]   (the value is even in gamma)

Split patterns:

* ``dyadic``     P+- = (F +- a, w +- g, m+-, f +- b, lam -+ eps b), eps = +-1;
* ``interval``   the same with eps ranging over [-1, 1] (eps = 0 keeps lam fixed);
* ``four-adic``  the four quarters of an H/G step with the G coefficient equal to
                 minus the H coefficient of f:
                 (F - a, w - g, f - b, lam + b), (F - a, w - g, f - b, lam - b),
                 (F + a, w + g, f + b, lam - b), (F + a, w + g, f + b, lam + b).

Children get the smallest admissible lower bound m+- = max(m, w+-/Q); the value
decreases in m, so this choice is optimal.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .dyadic import (DyadicStepFunction, FourAdicMartingale, TransformSpec,
                     martingale_transform, weighted_level_set_measure)
from .grids import ValueGrid3, interp_unit
from .unweighted import DomainError, UnweightedDP
from .weights import A1Weight, a1_constant, build_obstacle_weight

log = logging.getLogger(__name__)

PENALTY = -1e6
PATTERNS = ("dyadic", "interval", "four-adic")


@dataclass(frozen=True)
class WeightedBellmanPoint:
    F: float
    w: float
    m: float
    f: float
    lam: float
    Q: float = math.inf

    def __post_init__(self):
        tol = 1e-12 * max(1.0, abs(self.F), abs(self.w))
        if self.m <= 0:
            raise DomainError("m must be positive")
        if self.F < abs(self.f) * self.m - tol:
            raise DomainError("F < |f| m")
        if not self.m - tol <= self.w <= self.Q * self.m + tol:
            raise DomainError("w outside [m, Q m]")

    def astuple(self):
        return self.F, self.w, self.m, self.f, self.lam

    def with_m(self, m: float) -> "WeightedBellmanPoint":
        return WeightedBellmanPoint(self.F, self.w, m, self.f, self.lam, self.Q)


@dataclass(frozen=True)
class ReducedPoint:
    alpha: float
    beta: float
    gamma: float

    def in_domain(self, Q: float, tol: float = 1e-12) -> bool:
        return abs(self.gamma) <= self.alpha + tol and 1 - tol <= self.beta <= Q + tol


def reduce(p: WeightedBellmanPoint) -> ReducedPoint:
    if p.lam <= 0 or p.m <= 0:
        raise DomainError("reduction needs lam > 0 and m > 0")
    return ReducedPoint(p.F / (p.m * p.lam), p.w / p.m, p.f / p.lam)


def expand(r: ReducedPoint, m: float = 1.0, lam: float = 1.0, Q: float = math.inf) -> WeightedBellmanPoint:
    return WeightedBellmanPoint(r.alpha * m * lam, r.beta * m, m, r.gamma * lam, lam, Q)


def full_from_reduced(Bred):
    """Lift a reduced function B(alpha, beta, gamma) to the five variables; lam < 0
    gives the whole mass w (the zero transform already exceeds lam)."""
    def Bfn(F, w, m, f, lam):
        F, w, m, f, lam = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (F, w, m, f, lam)))
        out = np.where(lam < 0, w, 0.0)
        pos = lam > 0
        if np.any(pos):
            out[pos] = m[pos] * Bred(F[pos] / (m[pos] * lam[pos]), w[pos] / m[pos], f[pos] / lam[pos])
        return out if out.ndim else float(out)
    return Bfn


# --------------------------------------------------------------------------
# inequality checks


def _close(x, y, tol):
    return abs(x - y) <= tol * max(1.0, abs(x), abs(y))


def _pair_kinds(P, A, B, tol) -> set:
    """Split kinds ('mi11', 'mi21', '3conc') for which A, B are symmetric about P
    in (F, w, f, lam); a zero displacement is all three at once."""
    for name in ("F", "w", "f", "lam"):
        if not _close(getattr(A, name) + getattr(B, name), 2 * getattr(P, name), tol):
            return set()
    df, dl = A.f - P.f, A.lam - P.lam
    kinds = set()
    if _close(dl, 0.0, tol):
        kinds.add("3conc")
    if _close(dl, df, tol):
        kinds.add("mi11")
    if _close(dl, -df, tol):
        kinds.add("mi21")
    return kinds


def check_weighted_main_inequality(Bfn, P: WeightedBellmanPoint, *children: WeightedBellmanPoint,
                                   tol: float = 1e-9) -> float:
    """B(P) minus the average of B over the children.

    Two children: a (mi11), (mi21) or fixed-lam (3conc) split with
    P.m = min(m+, m-).  Four children: fixed m, splitting into one (mi11) pair and
    one (mi21) pair about P (the four-point concavity)."""
    if len(children) == 2:
        A, B = children
        if not _pair_kinds(P, A, B, tol):
            raise DomainError("children are not a main-inequality split of P")
        if not _close(P.m, min(A.m, B.m), tol):
            raise DomainError("parent m must equal min(m+, m-)")
    elif len(children) == 4:
        if any(not _close(c.m, P.m, tol) for c in children):
            raise DomainError("the four-point pattern keeps m fixed")
        c = children
        for i, j, k, l in ((0, 1, 2, 3), (0, 2, 1, 3), (0, 3, 1, 2)):
            first, second = _pair_kinds(P, c[i], c[j], tol), _pair_kinds(P, c[k], c[l], tol)
            if ("mi11" in first and "mi21" in second) or ("mi21" in first and "mi11" in second):
                break
        else:
            raise DomainError("four children are not an (mi11) + (mi21) combination")
    else:
        raise DomainError("expected two or four children")
    vals = [float(Bfn(*c.astuple())) for c in children]
    return float(Bfn(*P.astuple())) - float(np.mean(vals))


def check_monotone_in_m(Bfn, p: WeightedBellmanPoint, m_new: float, tol: float = 1e-9) -> bool:
    if m_new < p.m:
        raise ValueError("m' must not be smaller than m")
    q = p.with_m(m_new)  # raises on domain exit
    return float(Bfn(*p.astuple())) >= float(Bfn(*q.astuple())) - tol


# --------------------------------------------------------------------------
# dynamic programming


class WeightedDP:
    """N_k for the reduced weighted problem at a fixed Q.

    With ``pattern='four-adic'`` the leaves must carry a constant weight
    (F >= |f| w) and the level set is {g >= lam}, which is what the four-adic
    martingale packaging needs; the dyadic patterns let the weight vary freely
    below the transform depth and use the strict level set.
    """

    def __init__(self, Q: float, pattern: str = "dyadic", n_s: int = 33, n_b: int = 9,
                 n_u: int = 17, n_a: int = 11, n_g: int = 9, n_t: int = 9,
                 refine: int = 1, chunk: int = 64):
        if Q < 1:
            raise ValueError("Q must be at least 1")
        if pattern not in PATTERNS:
            raise ValueError(f"pattern must be one of {PATTERNS}")
        self.Q = float(Q)
        self.pattern = pattern
        flat = self.Q == 1.0
        self.n_s, self.n_b, self.n_u = n_s, (1 if flat else n_b), n_u
        self.n_a, self.n_g, self.n_t = n_a, (1 if flat else n_g), n_t
        self.refine = refine
        self.chunk = chunk
        if pattern == "dyadic":
            self.eps_values = np.array([-1.0, 1.0])
        elif pattern == "interval":
            self.eps_values = np.linspace(-1.0, 1.0, 5)
        else:
            self.eps_values = np.array([1.0])
        self.s = np.linspace(0.0, 1.0, n_s)
        self.lb = np.linspace(0.0, 1.0, self.n_b)
        self.u = np.linspace(0.0, 1.0, n_u)
        self.levels: list[np.ndarray] = []

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    # coordinates -------------------------------------------------------------
    def _beta_coord(self, beta):
        if self.Q == 1.0:
            return np.zeros_like(beta)
        return np.log(np.maximum(beta, 1.0)) / math.log(self.Q)

    def node_states(self):
        S, LB, U = np.meshgrid(self.s, self.lb, self.u, indexing="ij")
        alpha = np.minimum(S, 1 - 1e-6) / (1 - np.minimum(S, 1 - 1e-6))
        beta = self.Q ** LB
        return alpha, beta, U * alpha

    # evaluation --------------------------------------------------------------
    def leaf(self, alpha, beta, gamma):
        if self.pattern == "four-adic":
            return np.where(alpha >= np.abs(gamma) * beta - 1e-12, 0.0, PENALTY)
        return np.zeros(np.shape(alpha))

    def reduced_value(self, alpha, beta, gamma, k: int):
        alpha, beta, gamma = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (alpha, beta, gamma)))
        if k == -1:
            out = self.leaf(alpha, beta, gamma)
        else:
            if k > self.depth:
                raise ValueError(f"level {k} not computed (have {self.depth})")
            with np.errstate(divide="ignore", invalid="ignore"):
                s = np.where(alpha > 0, alpha / (1 + alpha), 0.0)
                u = np.where(alpha > 0, np.abs(gamma) / alpha, 0.0)
            out = interp_unit(self.levels[k], (s, self._beta_coord(beta), u))
        return out if out.ndim else float(out)

    def value(self, F, w, m, f, lam, k: int):
        """N_k in the full variables."""
        F, w, m, f, lam = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (F, w, m, f, lam)))
        const_leaf = self.pattern == "four-adic"
        hit = lam <= 0 if const_leaf else lam < 0
        out = np.empty(F.shape)
        if const_leaf:
            out[hit] = np.where(F[hit] >= np.abs(f[hit]) * w[hit] - 1e-12, w[hit], PENALTY)
        else:
            out[hit] = w[hit]
        rest = ~hit
        if np.any(rest):
            Fr, wr, mr, fr, lr = F[rest], w[rest], m[rest], f[rest], lam[rest]
            with np.errstate(divide="ignore", invalid="ignore"):
                if k == -1:
                    out[rest] = mr * self.leaf(Fr / (mr * lr), wr / mr, fr / lr)
                else:
                    s = np.where(Fr > 0, Fr / (mr * lr + Fr), 0.0)
                    u = np.where(Fr > 0, np.clip(np.abs(fr) * mr / Fr, 0, 1), 0.0)
                    lb = self._beta_coord(wr / mr)
                    if k > self.depth:
                        raise ValueError(f"level {k} not computed (have {self.depth})")
                    out[rest] = mr * interp_unit(self.levels[k], (s, lb, u))
        return out if out.ndim else float(out)

    # splits ------------------------------------------------------------------
    def children(self, F, w, f, lam, sa, sg, t, e, m=1.0):
        """Child states of the parent (F, w, m, f, lam); returns a list of
        (F, w, m, f, lam) tuples and a feasibility mask."""
        Q = self.Q
        a = sa * F
        gmax = np.maximum(w - m, 0.0)
        if self.pattern == "four-adic":
            gmax = np.minimum(gmax, 0.75 * w)
        g = sg * gmax
        Fp, Fm = F + a, F - a
        wp, wm = w + g, w - g
        mp, mm = np.maximum(m, wp / Q), np.maximum(m, wm / Q)
        lo = np.maximum(-Fp / mp - f, f - Fm / mm)
        hi = np.minimum(Fp / mp - f, f + Fm / mm)
        ok = hi >= lo
        b = lo + t * np.where(ok, hi - lo, 0.0)
        if self.pattern == "four-adic":
            kids = [(Fm, wm, mm, f - b, lam + b), (Fm, wm, mm, f - b, lam - b),
                    (Fp, wp, mp, f + b, lam - b), (Fp, wp, mp, f + b, lam + b)]
        else:
            kids = [(Fp, wp, mp, f + b, lam - e * b), (Fm, wm, mm, f - b, lam + e * b)]
        return kids, ok

    def _split_values(self, F, w, f, lam, sa, sg, t, e, k_prev, m=1.0):
        kids, ok = self.children(F, w, f, lam, sa, sg, t, e, m)
        with np.errstate(invalid="ignore"):
            v = sum(self.value(*kid, k_prev) for kid in kids) / len(kids)
        return np.where(ok, v, -np.inf)

    def _extreme_candidates(self, F, w, f, m):
        """For every (g, eps) the two values of a that make the admissible b-interval
        reach furthest up (t = 1) and down (t = 0).  Level-set jumps sit exactly at
        these extremes, where a uniform grid in a would miss them."""
        sgv = np.linspace(-1, 1, self.n_g) if self.n_g > 1 else np.zeros(1)
        SG, E = np.meshgrid(sgv, self.eps_values, indexing="ij")
        SG, E = SG.ravel()[None, :], E.ravel()[None, :]
        gmax = np.maximum(w - m, 0.0)
        if self.pattern == "four-adic":
            gmax = np.minimum(gmax, 0.75 * w)
        g = SG * gmax
        ip = 1.0 / np.maximum(m, (w + g) / self.Q)
        im = 1.0 / np.maximum(m, (w - g) / self.Q)
        with np.errstate(divide="ignore", invalid="ignore"):
            up = (2 * f + F * (im - ip)) / (ip + im)
            down = -(2 * f + F * (ip - im)) / (ip + im)
            sa_up = np.clip(np.where(F > 0, up / F, 0.0), -1, 1)
            sa_dn = np.clip(np.where(F > 0, down / F, 0.0), -1, 1)
        ones = np.ones_like(sa_up)
        xa = np.concatenate([sa_up, sa_dn], axis=1)
        xg = np.concatenate([SG * ones, SG * ones], axis=1)
        xt = np.concatenate([ones, 0 * ones], axis=1)
        xe = np.concatenate([E * ones, E * ones], axis=1)
        return xa, xg, xt, xe

    def best_split(self, F, w, f, lam, k_prev: int, m=1.0):
        F, w, f, lam = (np.asarray(x, dtype=float).ravel() for x in (F, w, f, lam))
        m = np.broadcast_to(np.asarray(m, dtype=float), F.shape)
        grids = np.meshgrid(np.linspace(-1, 1, self.n_a),
                            np.linspace(-1, 1, self.n_g) if self.n_g > 1 else np.zeros(1),
                            np.linspace(0, 1, self.n_t), self.eps_values, indexing="ij")
        SA, SG, T, E = (x.ravel()[None, :] for x in grids)
        n = F.size
        val = np.full(n, -np.inf)
        best = np.zeros((4, n))
        for lo in range(0, n, self.chunk):
            sl = slice(lo, lo + self.chunk)
            args = F[sl, None], w[sl, None], f[sl, None], m[sl, None]
            xa, xg, xt, xe = self._extreme_candidates(*args)
            sa = np.concatenate([np.broadcast_to(SA, (xa.shape[0], SA.shape[1])), xa], axis=1)
            sg = np.concatenate([np.broadcast_to(SG, sa.shape[:1] + SG.shape[1:]), xg], axis=1)
            tt = np.concatenate([np.broadcast_to(T, sa.shape[:1] + T.shape[1:]), xt], axis=1)
            ee = np.concatenate([np.broadcast_to(E, sa.shape[:1] + E.shape[1:]), xe], axis=1)
            v = self._split_values(F[sl, None], w[sl, None], f[sl, None], lam[sl, None],
                                   sa, sg, tt, ee, k_prev, m[sl, None])
            j = np.argmax(v, axis=1)
            r = np.arange(j.size)
            val[sl] = v[r, j]
            best[:, sl] = sa[r, j], sg[r, j], tt[r, j], ee[r, j]
        steps = np.array([2.0 / max(self.n_a - 1, 1), 2.0 / max(self.n_g - 1, 1) if self.n_g > 1 else 0.0,
                          1.0 / max(self.n_t - 1, 1)])
        loc = np.array(np.meshgrid(*(np.linspace(-1, 1, 3),) * 3, indexing="ij")).reshape(3, -1)
        for _ in range(self.refine):
            for lo in range(0, n, self.chunk):
                sl = slice(lo, lo + self.chunk)
                sa = np.clip(best[0, sl, None] + 0.5 * steps[0] * loc[0], -1, 1)
                sg = np.clip(best[1, sl, None] + 0.5 * steps[1] * loc[1], -1, 1)
                tt = np.clip(best[2, sl, None] + 0.5 * steps[2] * loc[2], 0, 1)
                ee = np.broadcast_to(best[3, sl, None], sa.shape)
                v = self._split_values(F[sl, None], w[sl, None], f[sl, None], lam[sl, None],
                                       sa, sg, tt, ee, k_prev, m[sl, None])
                j = np.argmax(v, axis=1)
                r = np.arange(j.size)
                better = v[r, j] > val[sl]
                idx = np.nonzero(better)[0] + lo
                val[idx] = v[r, j][better]
                best[0, idx], best[1, idx] = sa[r, j][better], sg[r, j][better]
                best[2, idx] = tt[r, j][better]
            steps = steps / 2
        return val, best

    def run(self, k: int) -> "WeightedDP":
        alpha, beta, gamma = self.node_states()
        while self.depth < k:
            prev = self.depth
            v, _ = self.best_split(alpha, beta, gamma, np.ones_like(alpha), prev)
            v = v.reshape(alpha.shape)
            base = self.levels[-1] if self.levels else self.leaf(alpha, beta, gamma)
            v = np.maximum(v, base)
            v = np.maximum(v, PENALTY)
            self.levels.append(v)
            log.info("weighted Q=%g %s level %d done", self.Q, self.pattern, self.depth)
        return self

    # outputs -----------------------------------------------------------------
    def to_value_grid(self, k: int, alpha_max: float = 4.0, resolution: int = 33,
                      gamma_sym: bool = True) -> ValueGrid3:
        al = np.linspace(0.0, alpha_max, resolution)
        be = np.linspace(1.0, self.Q, resolution) if self.Q > 1 else np.array([1.0])
        ga = np.linspace(-alpha_max if gamma_sym else 0.0, alpha_max, resolution)
        A, B, G = np.meshgrid(al, be, ga, indexing="ij")
        vals = np.full(A.shape, np.nan)
        ok = np.abs(G) <= A + 1e-12
        vals[ok] = self.reduced_value(A[ok], B[ok], G[ok], k)
        meta = {"Q": self.Q, "k": k, "pattern": self.pattern,
                "box": [[0.0, alpha_max], [1.0, self.Q], [float(ga[0]), alpha_max]],
                "resolution": resolution, "smoothing": "none",
                "reduced_grid": [self.n_s, self.n_b, self.n_u],
                "split_grid": [self.n_a, self.n_g, self.n_t, len(self.eps_values)]}
        return ValueGrid3((al, be, ga), vals, ("alpha", "beta", "gamma"), meta)

    def interpolation_tolerance(self, k: int, n: int = 400, alpha_max: float = 3.0,
                                seed: int = 12345, quantile: float = 1.0) -> float:
        """A posteriori interpolation error of level k: at random off-node points,
        the gap between the interpolated N_k and a direct split evaluated there
        against N_{k-1}.  Points touching infeasible states are ignored."""
        rng = np.random.default_rng(seed)
        alpha = rng.uniform(0.0, alpha_max, n)
        beta = self.Q ** rng.uniform(0.0, 1.0, n) if self.Q > 1 else np.ones(n)
        gamma = rng.uniform(-1, 1, n) * alpha
        interp = np.asarray(self.reduced_value(alpha, beta, gamma, k))
        prev = self.reduced_value(alpha, beta, gamma, k - 1)
        direct, _ = self.best_split(alpha, beta, gamma, np.ones(n), k - 1)
        direct = np.maximum(direct, prev)
        ok = (interp >= 0) & (direct >= 0)
        if not np.any(ok):
            return float("nan")
        return float(np.quantile(np.abs(interp - direct)[ok], quantile))


def grid_tolerance(dp: "WeightedDP", k: int, **kw) -> float:
    """Error bound for N_k: one-step interpolation errors of levels 1..k add up
    because the Bellman step is 1-Lipschitz in the sup norm."""
    return float(sum(dp.interpolation_tolerance(j, **kw) for j in range(1, k + 1)))


def brute_force_weighted_Nk(k: int, Q: float, alpha_max: float = 4.0, resolution: int = 33,
                            dp: WeightedDP | None = None, **dp_kwargs) -> ValueGrid3:
    if k < 0:
        raise ValueError("k must be >= 0")
    dp = dp or WeightedDP(Q, **dp_kwargs)
    dp.run(k)
    return dp.to_value_grid(k, alpha_max, resolution)


def compare_with_unweighted(wdp: WeightedDP, udp: UnweightedDP, k: int) -> float:
    """Sup difference at the weighted nodes between the Q = 1 weighted N_k and the
    unweighted N_k(alpha, gamma, 1)."""
    if wdp.Q != 1.0:
        raise ValueError("only meaningful at Q = 1")
    alpha, beta, gamma = wdp.node_states()
    return float(np.max(np.abs(wdp.levels[k] - udp.value(alpha, gamma, np.ones_like(alpha), k))))


# --------------------------------------------------------------------------
# random patterns for the sweeps


def random_weighted_patterns(n: int, Q: float, rng: np.random.Generator, kind: str = "mi",
                             alpha_max: float = 3.0):
    """Random parent (reduced, m = lam = 1) and split in the DP parametrisation.

    kind: 'mi' (eps = +-1), '3conc' (eps = 0) or '4conc' (four-adic quarters)."""
    alpha = rng.uniform(0.0, alpha_max, n)
    beta = Q ** rng.uniform(0.0, 1.0, n) if Q > 1 else np.ones(n)
    gamma = rng.uniform(-1, 1, n) * alpha
    sa = rng.uniform(-1, 1, n)
    sg = rng.uniform(-1, 1, n)
    t = rng.uniform(0, 1, n)
    eps = {"mi": rng.choice([-1.0, 1.0], n), "3conc": np.zeros(n), "4conc": np.ones(n)}[kind]
    return alpha, beta, gamma, sa, sg, t, eps


def finite_depth_defects(dp: WeightedDP, k: int, n: int, rng: np.random.Generator,
                         kind: str = "mi", alpha_max: float = 3.0):
    """N_k(P) - mean N_{k-1}(children) on random admissible splits."""
    if kind == "4conc" and dp.pattern != "four-adic":
        raise ValueError("four-point splits need the four-adic DP")
    if kind == "3conc" and dp.pattern != "interval":
        raise ValueError("fixed-lam splits need the interval DP")
    alpha, beta, gamma, sa, sg, t, eps = random_weighted_patterns(n, dp.Q, rng, kind, alpha_max)
    kids, ok = dp.children(alpha, beta, gamma, np.ones(n), sa, sg, t, eps)
    parent = dp.value(alpha, beta, np.ones(n), gamma, np.ones(n), k)
    avg = sum(dp.value(*kid, k - 1) for kid in kids) / len(kids)
    d = parent - avg
    if dp.pattern == "four-adic":
        # a negative child value marks a split that leaves the constant-leaf class
        ok &= parent >= 0
        for kid in kids:
            ok &= np.asarray(dp.value(*kid, k - 1)) >= 0
    return d[ok]


def monotone_in_m_defects(dp: WeightedDP, k: int, n: int, rng: np.random.Generator,
                          factor: float = 1.1, alpha_max: float = 3.0):
    """N_k(F, w, m, f, 1) - N_k(F, w, m', f, 1) with m' = factor * m on random points
    where both lie in the domain."""
    F = rng.uniform(0.0, alpha_max, n)
    w = dp.Q ** rng.uniform(0.0, 1.0, n) * factor if dp.Q > 1 else np.full(n, factor)
    w = np.minimum(w, dp.Q)
    f = rng.uniform(-1, 1, n) * F / factor
    m1 = np.ones(n)
    m2 = np.full(n, factor)
    ok = (w >= m2) & (w <= dp.Q * m1) & (F >= np.abs(f) * m2)
    v1, v2 = dp.value(F, w, m1, f, 1.0, k), dp.value(F, w, m2, f, 1.0, k)
    ok &= (v1 >= 0) & (v2 >= 0)
    return (v1 - v2)[ok]


# --------------------------------------------------------------------------
# explicit obstacle configuration


@dataclass
class ObstacleReport:
    Q: float
    a: float
    b: float
    lam: float
    level_measure: float
    mean_weight: float
    ratio: float
    reduced: ReducedPoint
    transform: DyadicStepFunction

    @property
    def passed(self) -> bool:
        return self.ratio >= 1.0 / 3.0


def verify_weighted_obstacle(Q: float, a: float = 0.9, b: float = 1.0, depth: int = 2) -> ObstacleReport:
    """phi = -a on the leftmost quarter, b on the rightmost, 0 elsewhere; weight
    (1, Q, Q, 1) on the quarters; transform eps = +1 on the left half and -1 on the
    right half; level lam = (a + b)/4 with the non-strict level set."""
    if Q < 2:
        raise ValueError("Q must be at least 2")
    if not 0 < a < b:
        raise ValueError("need 0 < a < b")
    w = build_obstacle_weight(Q, depth).w
    quarters = np.array([-a, 0.0, 0.0, b])
    phi = DyadicStepFunction(depth, np.repeat(quarters, 2 ** (depth - 2)))
    levels = [np.zeros(2 ** d) for d in range(depth)]
    levels[1][:] = (1.0, -1.0)
    spec = TransformSpec(depth - 1, tuple(levels))
    psi = martingale_transform(phi, spec)
    lam = (a + b) / 4
    meas = weighted_level_set_measure(psi, lam, w, strict=False)
    mw = float(w.values.mean())
    F = float(np.mean(np.abs(phi.values) * w.values))
    red = ReducedPoint(F / (w.values.min() * lam), mw / w.values.min(), phi.average() / lam)
    return ObstacleReport(Q, a, b, lam, meas, mw, meas / mw, red, psi)


# --------------------------------------------------------------------------
# quadratic form by finite differences


@dataclass
class QuadraticFormSample:
    K: float
    L: float
    N: float
    point: ReducedPoint
    steps: tuple
    derivs: dict

    def satisfied(self, tol: float) -> bool:
        if not np.isfinite(self.K):
            return False
        if self.K < -tol:
            return False
        if self.K <= tol:
            return True
        return self.N >= self.L ** 2 / (4 * self.K) - tol


class StencilError(ValueError):
    pass


def quadratic_form_sample(Bgrid, point: ReducedPoint, steps) -> QuadraticFormSample:
    """Central differences of B at ``point`` and the K, L, N combination.

    ``Bgrid`` is any callable B(alpha, beta, gamma) (typically a smoothed
    ValueGrid3); a stencil that leaves the grid (NaN) raises StencilError."""
    ha, hb, hg = steps
    a, b, g = point.alpha, point.beta, point.gamma
    offs = np.array([(i, j, l) for i in (-1, 0, 1) for j in (-1, 0, 1) for l in (-1, 0, 1)], dtype=float)
    pts = np.array([a, b, g]) + offs * np.array([ha, hb, hg])
    vals = np.asarray(Bgrid(pts[:, 0], pts[:, 1], pts[:, 2]), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise StencilError(f"stencil around {point} leaves the grid")
    V = vals.reshape(3, 3, 3)
    c = V[1, 1, 1]
    Ba = (V[2, 1, 1] - V[0, 1, 1]) / (2 * ha)
    Bb = (V[1, 2, 1] - V[1, 0, 1]) / (2 * hb)
    Bg = (V[1, 1, 2] - V[1, 1, 0]) / (2 * hg)
    Baa = (V[2, 1, 1] - 2 * c + V[0, 1, 1]) / ha ** 2
    Bbb = (V[1, 2, 1] - 2 * c + V[1, 0, 1]) / hb ** 2
    Bgg = (V[1, 1, 2] - 2 * c + V[1, 1, 0]) / hg ** 2
    Bab = (V[2, 2, 1] - V[2, 0, 1] - V[0, 2, 1] + V[0, 0, 1]) / (4 * ha * hb)
    psi = -a * a * Baa - 2 * a * b * Bab - b * b * Bbb
    d_a2Ba = 2 * a * Ba + a * a * Baa
    K = psi + (-a * a * Baa - b * b * Bbb) * g
    L = -psi + d_a2Ba - b * b * Bbb
    N = -(1 + 3 * g + g * g) * Bgg - 2 * g * Bg - d_a2Ba - a * a * Baa * g
    derivs = dict(B=c, Ba=Ba, Bb=Bb, Bg=Bg, Baa=Baa, Bbb=Bbb, Bgg=Bgg, Bab=Bab, psi=psi)
    return QuadraticFormSample(float(K), float(L), float(N), point, tuple(steps), derivs)


def quadratic_form_sweep(grid: ValueGrid3, n: int, rng: np.random.Generator, tol: float,
                         cells: float = 2.0, gamma_max_frac: float = 0.5):
    """Random interior samples (gamma >= 0) of a smoothed grid; returns
    (satisfied, conclusive, inconclusive, skipped) counts and the samples."""
    al, be, ga = grid.axes
    h = [cells * (ax[1] - ax[0]) if ax.size > 1 else 0.0 for ax in grid.axes]
    if h[1] == 0.0:
        raise ValueError("the beta axis is degenerate (Q = 1)")
    out = []
    ok = conc = inconc = skipped = 0
    for _ in range(n):
        a = rng.uniform(al[0] + 2 * h[0], al[-1] - 2 * h[0])
        b = rng.uniform(be[0] + 2 * h[1], be[-1] - 2 * h[1])
        g = rng.uniform(0.0, gamma_max_frac * a)
        try:
            s = quadratic_form_sample(grid, ReducedPoint(a, b, g), h)
        except StencilError:
            skipped += 1
            continue
        out.append(s)
        if s.K > tol:
            conc += 1
            ok += s.satisfied(tol)
        else:
            inconc += 1
    return {"satisfied": ok, "conclusive": conc, "inconclusive": inconc, "skipped": skipped,
            "fraction": ok / conc if conc else float("nan")}, out


# --------------------------------------------------------------------------
# witness replay and empirical weak norm


@dataclass
class WeightedWitness:
    phi: DyadicStepFunction
    w: DyadicStepFunction
    spec: TransformSpec
    lam: float

    @property
    def transform(self) -> DyadicStepFunction:
        return martingale_transform(self.phi, self.spec)

    def measure(self) -> float:
        return weighted_level_set_measure(self.transform, self.lam, self.w)

    def weak_ratio(self) -> float:
        """sup_lam lam * w{T phi > lam} / (||phi||_{L1(w)} * [w]_A1)."""
        return weak_ratio(self.phi, self.w, self.spec)


def weak_ratio(phi: DyadicStepFunction, w: DyadicStepFunction, spec: TransformSpec) -> float:
    t = martingale_transform(phi, spec).values
    wv = w.values
    norm = float(np.mean(np.abs(phi.values) * wv))
    if norm == 0:
        return 0.0
    order = np.argsort(-t)
    ts, ws = t[order], np.cumsum(wv[order]) / wv.size
    # w{T >= v} for each distinct value v: take the last index of each tie block
    last = np.r_[ts[1:] != ts[:-1], True]
    vals = ts[last] * ws[last]
    best = max(float(vals.max()), 0.0)
    return best / (norm * a1_constant(w))


def _terminal_fill(phi, wv, lo, n, F, w, m, f):
    """Two halves: weight (m, 2w - m), phi (p, r) with <phi> = f, <|phi| w> = F."""
    t = (F - abs(f) * m) / w if w > 0 else 0.0
    t = max(t, 0.0)
    sgn = 1.0 if f >= 0 else -1.0
    p, r = 2 * f + sgn * t, -sgn * t
    h = n // 2
    wv[lo:lo + h] = m
    wv[lo + h:lo + n] = 2 * w - m
    phi[lo:lo + h] = p
    phi[lo + h:lo + n] = r


def weighted_witness(dp: WeightedDP, point: ReducedPoint, k: int) -> WeightedWitness:
    """Replay the dyadic DP from (alpha, beta, gamma) with m = lam = 1 into an
    explicit triple (phi, w, eps) of depth k + 2."""
    if dp.pattern == "four-adic":
        raise ValueError("use build_extremal_quadruple for the four-adic pattern")
    if not point.in_domain(dp.Q):
        raise DomainError("point outside the reduced domain")
    D = k + 2
    phi, wv = np.zeros(2 ** D), np.zeros(2 ** D)
    eps = [np.zeros(2 ** d) for d in range(D)]
    stack = [(0, 0, point.alpha, point.beta, 1.0, point.gamma, 1.0, k)]
    while stack:
        d, i, F, w, m, f, lam, lev = stack.pop()
        n = 2 ** (D - d)
        if lam < 0 or lev < 0:
            _terminal_fill(phi, wv, i * n, n, F, w, m, f)
            continue
        _, best = dp.best_split([F], [w], [f], [lam], lev - 1, m)
        sa, sg, t, e = best[:, 0]
        kids, ok = dp.children(F, w, f, lam, sa, sg, t, e, m)
        if not ok:
            _terminal_fill(phi, wv, i * n, n, F, w, m, f)
            continue
        (Fp, wp, mp, fp, lp), (Fm, wm, mm, fm, lm) = [tuple(float(x) for x in kid) for kid in kids]
        eps[d][i] = e
        stack.append((d + 1, 2 * i + 1, Fp, wp, mp, fp, lp, lev - 1))
        stack.append((d + 1, 2 * i, Fm, wm, mm, fm, lm, lev - 1))
    return WeightedWitness(DyadicStepFunction(D, phi), DyadicStepFunction(D, wv),
                           TransformSpec(D - 1, tuple(eps)), 1.0)


def best_roots(dp: WeightedDP, k: int, count: int = 1) -> list[ReducedPoint]:
    """Grid nodes with the largest N_k / alpha (the weak-type constant at lam = 1)."""
    alpha, beta, gamma = dp.node_states()
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where((alpha > 1e-9) & (alpha < 1e5), dp.levels[k] / alpha, -np.inf)
    order = np.argsort(-r, axis=None)[:count]
    return [ReducedPoint(float(alpha.flat[i]), float(beta.flat[i]), float(gamma.flat[i]))
            for i in order]


def best_root(dp: WeightedDP, k: int) -> ReducedPoint:
    return best_roots(dp, k, 1)[0]


@dataclass
class BlowupResult:
    Q: float
    k: int
    ratio: float
    a1: float
    root: ReducedPoint
    dp_ratio: float
    witness: WeightedWitness


def empirical_weak_norm_ratio(Q: float, k: int, dp: WeightedDP | None = None,
                              candidates: int = 16, **dp_kwargs) -> BlowupResult:
    """Best realised ratio over witnesses replayed from the ``candidates`` grid
    nodes with the largest N_k / alpha.  Every witness is an explicit triple, so
    the result is a certified lower bound for the normalised weak norm."""
    dp = dp or WeightedDP(Q, **dp_kwargs)
    dp.run(k)
    best = None
    for root in best_roots(dp, k, candidates):
        wit = weighted_witness(dp, root, k)
        a1 = a1_constant(wit.w)
        if a1 > Q * (1 + 1e-9):
            raise AssertionError(f"witness weight has A1 constant {a1} > {Q}")
        ratio = wit.weak_ratio()
        if best is None or ratio > best.ratio:
            dp_ratio = float(dp.reduced_value(root.alpha, root.beta, root.gamma, k)) / root.alpha / Q
            best = BlowupResult(Q, k, ratio, a1, root, dp_ratio, wit)
    return best


def fit_log_growth(Qs, ratios):
    """Least-squares exponent p in ratio ~ c log(Q)^p with a 95% interval; this is a
    descriptive fit, not a verification of any asymptotic rate."""
    x = np.log(np.log(np.asarray(Qs, dtype=float)))
    y = np.log(np.asarray(ratios, dtype=float))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    dof = max(len(x) - 2, 1)
    s2 = float(res[0]) / dof if res.size else 0.0
    cov = s2 * np.linalg.inv(A.T @ A)
    from scipy.stats import t as student_t
    half = float(student_t.ppf(0.975, dof) * math.sqrt(cov[0, 0]))
    return float(coef[0]), (float(coef[0]) - half, float(coef[0]) + half)


# --------------------------------------------------------------------------
# bookkeeping contradiction


@dataclass
class BookkeepingReport:
    p: float
    Qs: np.ndarray
    lhs: np.ndarray
    threshold: float | None
    first_crossing: float | None
    status: str


def bookkeeping_lhs(Q, p: float, c: float = 1.0, tau: float = 1.0, C: float = 1.0):
    """C a0^2 (Q/Qhat)^2 (g0/a0) log(1 + Q g0/a0) with Qhat = Q log^p Q,
    a0 = c Q/Qhat, g0 = tau (Q/Qhat) a0."""
    Q = np.asarray(Q, dtype=float)
    r = np.log(Q) ** (-p)
    a0 = c * r
    g0 = tau * r * a0
    return C * a0 ** 2 * r ** 2 * (g0 / a0) * np.log1p(Q * g0 / a0)


def bookkeeping_witness(p: float, Qlist=None, c: float = 1.0, tau: float = 1.0,
                        C: float = 1.0, tail: float = 0.25) -> BookkeepingReport:
    """Locate the contradiction threshold: the start of the final run of Q values
    with LHS > 1.  If the list ends with LHS <= 1 the status is 'inconclusive'
    when LHS is still rising over the last ``tail`` fraction of the list, else
    'none'."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    Qs = np.asarray(Qlist if Qlist is not None else 2.0 ** np.arange(1, 61), dtype=float)
    if np.any(Qs <= 1):
        raise ValueError("Q values must exceed 1")
    Qs = np.sort(Qs)
    lhs = bookkeeping_lhs(Qs, p, c, tau, C)
    above = lhs > 1
    first = float(Qs[np.argmax(above)]) if above.any() else None
    if above[-1]:
        j = len(Qs) - 1
        while j > 0 and above[j - 1]:
            j -= 1
        return BookkeepingReport(p, Qs, lhs, float(Qs[j]), first, "contradiction")
    m = max(2, int(len(Qs) * tail))
    rising = bool(np.all(np.diff(lhs[-m:]) > 0))
    return BookkeepingReport(p, Qs, lhs, None, first, "inconclusive" if rising else "none")
