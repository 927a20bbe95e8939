"""Four-adic extremal quadruples and their remodeling into periodic functions.

A quadruple (F, f, w, g) consists of three H-martingales and one G-martingale whose
coefficients are tied by b_I = -a_I.  It is extracted from the four-adic weighted
DP by replaying the argmax splits.

Proliferation.  The schedule n_1 < n_2 < ... < n_N splits every supervisee of
generation k into 4**n_k sub-pieces; sub-piece j is supervised by son (j mod 4) of
the supervisor.  The square sine of the pair takes the H value of that son and
the square cosine its G value, so a period of either wave spans four
consecutive sub-pieces.  W uses the variant whose first four and last four
sub-pieces are zero.  A final piece is addressed by its digits (j_1, ..., j_N)
and its four-adic path q_i = j_i mod 4.

A zeroed step of W freezes W at the value of its supervisee for the whole
subtree below it (``w_mode="frozen"``); ``w_mode="literal"`` only drops the
generation's own term and keeps the finer ones.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .dyadic import G_PATTERN, H_PATTERN, FourAdicMartingale
from .hilbert import periodic_hilbert_transform, square_waves
from .weighted import ReducedPoint, WeightedDP, best_roots
from .weights import doubling_report

log = logging.getLogger(__name__)


class ConstructionError(ValueError):
    pass


# --------------------------------------------------------------------------
# extremal quadruples


@dataclass
class PropertyCheck:
    name: str
    value: float
    threshold: float
    passed: bool


@dataclass(eq=False)
class ExtremalQuadruple:
    Fm: FourAdicMartingale
    fm: FourAdicMartingale
    wm: FourAdicMartingale
    gm: FourAdicMartingale
    Q: float
    g: float
    root: ReducedPoint | None = None
    checks: list = field(default_factory=list)

    @property
    def generations(self) -> int:
        return self.wm.max_generation

    def payoff(self) -> float:
        """g * integral of w over {gm >= g}, divided by the integral of F."""
        w, gv, F = self.wm.cell_values(), self.gm.cell_values(), self.Fm.cell_values()
        return float(self.g * w[gv >= self.g].sum() / F.sum()) if F.sum() > 0 else 0.0

    def payoff_sublevel(self) -> float:
        """Sign-flipped variant: the martingale g - gm carries the constant term g
        and the payoff is taken over its sub-level set {g - gm <= 0}."""
        w, gv, F = self.wm.cell_values(), self.gm.cell_values(), self.Fm.cell_values()
        return float(self.g * w[(self.g - gv) <= 0].sum() / F.sum()) if F.sum() > 0 else 0.0

    def verify(self, tol: float = 1e-9) -> list[PropertyCheck]:
        n = self.generations
        F, f, w = self.Fm.cell_values(), self.fm.cell_values(), self.wm.cell_values()
        out = []
        worst1 = worst2 = 0.0
        for d in range(n + 1):
            aF = F.reshape(4 ** d, -1).mean(axis=1)
            af = np.abs(f).reshape(4 ** d, -1).mean(axis=1)
            aw = w.reshape(4 ** d, -1).mean(axis=1)
            mw = w.reshape(4 ** d, -1).min(axis=1)
            worst1 = min(worst1, float(np.min(aF - af * mw)))
            worst2 = max(worst2, float(np.max(aw / mw)))
        out.append(PropertyCheck("domination", worst1, -tol, worst1 >= -tol))
        out.append(PropertyCheck("a1_bound", worst2, self.Q, worst2 <= self.Q * (1 + tol)))
        link = max((float(np.max(np.abs(b + a))) for a, b in zip(self.fm.coeffs, self.gm.coeffs)),
                   default=0.0)
        out.append(PropertyCheck("coefficient_link", link, 0.0, link == 0.0))
        pay = self.payoff()
        out.append(PropertyCheck("payoff", pay, 0.0, pay >= 0.0))
        dbl = doubling_report(w, arity=4, siblings=False).constant if n > 0 else 1.0
        out.append(PropertyCheck("four_adic_doubling", dbl, 4.0, dbl <= 4.0 * (1 + tol)))
        pos = float(min(F.min(), w.min()))
        out.append(PropertyCheck("positivity", pos, 0.0, pos >= -tol))
        self.checks = out
        return out

    def to_json(self) -> dict:
        return {"Q": self.Q, "g": self.g, "F": self.Fm.to_json(), "f": self.fm.to_json(),
                "w": self.wm.to_json(), "gm": self.gm.to_json()}

    @classmethod
    def from_json(cls, doc: dict) -> "ExtremalQuadruple":
        return cls(FourAdicMartingale.from_json(doc["F"]), FourAdicMartingale.from_json(doc["f"]),
                   FourAdicMartingale.from_json(doc["w"]), FourAdicMartingale.from_json(doc["gm"]),
                   float(doc["Q"]), float(doc["g"]))


def _replay_four_adic(dp: WeightedDP, root: ReducedPoint, generations: int, g: float):
    dF = [np.zeros(4 ** n) for n in range(generations)]
    dw = [np.zeros(4 ** n) for n in range(generations)]
    da = [np.zeros(4 ** n) for n in range(generations)]
    # reduced root scaled so that the level equals g
    stack = [(0, 0, root.alpha * g, root.beta, 1.0, root.gamma * g, g, generations - 1)]
    while stack:
        n, i, F, w, m, f, lam, lev = stack.pop()
        if lam <= 0 or lev < 0:
            if F < abs(f) * w * (1 + 1e-12) - 1e-12:
                raise ConstructionError("domination: terminal cell with F < |f| w")
            continue
        _, best = dp.best_split([F], [w], [f], [lam], lev - 1, m)
        sa, sg, t, e = best[:, 0]
        kids, ok = dp.children(F, w, f, lam, sa, sg, t, e, m)
        if not ok:
            raise ConstructionError("domination: no admissible split")
        kids = [tuple(float(np.asarray(x).ravel()[0]) for x in kid) for kid in kids]
        dF[n][i] = kids[3][0] - F
        dw[n][i] = kids[3][1] - w
        da[n][i] = kids[3][3] - f
        for q in range(4):
            Fq, wq, mq, fq, lq = kids[q]
            stack.append((n + 1, 4 * i + q, Fq, wq, mq, fq, lq, lev - 1))
    return dF, dw, da


def build_extremal_quadruple(Q: float, depth: int, dp: WeightedDP | None = None,
                             g: float = 1.0, candidates: int = 8, **dp_kwargs) -> ExtremalQuadruple:
    """Replay the four-adic DP into martingales with ``depth`` generations and keep
    the candidate root with the largest payoff that passes every property."""
    if Q < 1:
        raise ValueError("Q must be at least 1")
    if depth < 1:
        raise ValueError("depth must be at least 1")
    dp = dp or WeightedDP(Q, pattern="four-adic", **dp_kwargs)
    if dp.pattern != "four-adic":
        raise ValueError("the quadruple needs the four-adic DP")
    dp.run(depth - 1)
    best, errors = None, []
    for root in best_roots(dp, depth - 1, candidates):
        if dp.reduced_value(root.alpha, root.beta, root.gamma, depth - 1) < 0:
            continue
        try:
            dF, dw, da = _replay_four_adic(dp, root, depth, g)
        except ConstructionError as exc:
            errors.append(str(exc))
            continue
        q = ExtremalQuadruple(
            FourAdicMartingale("H", root.alpha * g, tuple(dF)),
            FourAdicMartingale("H", root.gamma * g, tuple(da)),
            FourAdicMartingale("H", root.beta, tuple(dw)),
            FourAdicMartingale("G", 0.0, tuple(-a for a in da)),
            float(Q), float(g), root)
        failed = [c.name for c in q.verify() if not c.passed]
        if failed:
            errors.append(", ".join(failed))
            continue
        if best is None or q.payoff() > best.payoff():
            best = q
    if best is None:
        raise ConstructionError(f"no candidate passed: {errors}")
    return best


# --------------------------------------------------------------------------
# proliferation schedule and lazy evaluation


@dataclass(frozen=True)
class ProliferationSchedule:
    exponents: tuple[int, ...]

    def __post_init__(self):
        n = tuple(int(x) for x in self.exponents)
        if not n or n[0] < 1 or any(b <= a for a, b in zip(n, n[1:])):
            raise ValueError("exponents must be positive and strictly increasing")
        object.__setattr__(self, "exponents", n)

    @property
    def generations(self) -> int:
        return len(self.exponents)

    def offsets(self) -> np.ndarray:
        """S_k = n_1 + ... + n_k (S_0 = 0): generation-k pieces have length 4**-S_k."""
        return np.concatenate([[0], np.cumsum(self.exponents)])

    def supervisor(self, digits) -> tuple[int, ...]:
        """Four-adic path (son indices) of the supervisor of a piece."""
        return tuple(int(j) % 4 for j in digits)

    def digits(self, x, generation: int | None = None) -> np.ndarray:
        """Digits (j_1, ..., j_k) of the generation-k piece containing x."""
        k = self.generations if generation is None else generation
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape + (k,), dtype=np.int64)
        r = x.copy()
        for i, n in enumerate(self.exponents[:k]):
            r = r * 4 ** n
            d = np.floor(r)
            out[..., i] = d
            r = r - d
        return out

    def to_json(self) -> dict:
        return {"exponents": list(self.exponents)}


def _path_index(paths: np.ndarray) -> np.ndarray:
    """Flat index of four-adic cells from son digits (..., k)."""
    idx = np.zeros(paths.shape[:-1], dtype=np.int64)
    for i in range(paths.shape[-1]):
        idx = 4 * idx + paths[..., i]
    return idx


@dataclass(eq=False)
class RemodeledFunctions:
    quad: ExtremalQuadruple
    schedule: ProliferationSchedule
    w_mode: str = "frozen"

    def __post_init__(self):
        if self.schedule.generations != self.quad.generations:
            raise ValueError("schedule generations must equal quadruple generations")
        if self.w_mode not in ("frozen", "literal"):
            raise ValueError("w_mode must be 'frozen' or 'literal'")

    def _sum(self, mart: FourAdicMartingale, digits: np.ndarray, modified: bool, upto=None):
        k = digits.shape[-1] if upto is None else upto
        out = np.full(digits.shape[:-1], mart.constant, dtype=float)
        paths = digits % 4
        alive = np.ones(out.shape, dtype=bool)
        for i in range(k):
            sup = _path_index(paths[..., :i])
            val = mart.coeffs[i][sup] * mart.pattern[paths[..., i]]
            if modified:
                n = 4 ** self.schedule.exponents[i]
                j = digits[..., i]
                edge = (j < 4) | (j >= n - 4)
                alive = alive & ~edge if self.w_mode == "frozen" else ~edge
                val = np.where(alive, val, 0.0)
            out = out + val
        return out

    def evaluate(self, name: str, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if np.any((x < 0) | (x >= 1)):
            x = x % 1.0
        d = self.schedule.digits(x)
        return self.piece_values(name, d)

    def piece_values(self, name: str, digits: np.ndarray, generation: int | None = None):
        q = self.quad
        mart, modified = {"W": (q.wm, True), "Phi": (q.Fm, False), "phi": (q.fm, False),
                          "rho": (q.gm, False)}[name]
        return self._sum(mart, np.asarray(digits, dtype=np.int64), modified, generation)

    def W(self, x):
        return self.evaluate("W", x)

    def Phi(self, x):
        return self.evaluate("Phi", x)

    def phi(self, x):
        return self.evaluate("phi", x)

    def rho(self, x):
        return self.evaluate("rho", x)

    def materialize(self, name: str, points_per_piece: int = 1, limit: int = 2 ** 24) -> np.ndarray:
        """Values on the uniform grid of cell centres (small schedules only)."""
        S = int(self.schedule.offsets()[-1])
        M = 4 ** S * points_per_piece
        if M > limit:
            raise ValueError(f"{M} points exceed the limit {limit}")
        x = (np.arange(M) + 0.5) / M
        return self.evaluate(name, x)


def remodel(q: ExtremalQuadruple, schedule: ProliferationSchedule,
            w_mode: str = "frozen") -> RemodeledFunctions:
    return RemodeledFunctions(q, schedule, w_mode)


def sqsin_sqcos(n: int, points_per_step: int = 1, modified: bool = False):
    """Square sine / cosine of a supervisee split into 4**n steps: step j takes the
    H (resp. G) value of son j mod 4.  ``modified`` zeroes the first and last four
    steps of the sine."""
    if n < 1:
        raise ValueError("n must be at least 1")
    j = np.arange(4 ** n)
    s, c = H_PATTERN[j % 4].copy(), G_PATTERN[j % 4].copy()
    if modified:
        s[:4] = 0.0
        s[-4:] = 0.0
    return np.repeat(s, points_per_step), np.repeat(c, points_per_step)


# --------------------------------------------------------------------------
# exact distribution transfer


def _boundary_fractions(schedule: ProliferationSchedule) -> np.ndarray:
    return np.array([min(8.0 / 4 ** n, 1.0) for n in schedule.exponents])


def _path_weights(r: RemodeledFunctions, boundary: np.ndarray) -> np.ndarray:
    """Average of W over the pieces with each four-adic path: W is linear in the
    zeroing flags, which occur with frequency ``boundary`` independently of q and
    of each other."""
    q = r.quad
    N = q.generations
    out = np.full(4 ** N, q.wm.constant)
    paths = np.array(list(product(range(4), repeat=N)), dtype=np.int64).reshape(-1, N)
    keep = 1.0
    for i in range(N):
        sup = _path_index(paths[:, :i])
        keep = keep * (1 - boundary[i]) if r.w_mode == "frozen" else 1 - boundary[i]
        out += q.wm.coeffs[i][sup] * H_PATTERN[paths[:, i]] * keep
    return out


@dataclass
class DistributionReport:
    lebesgue_distance: float
    weighted_distance: float
    payoff_model: float
    payoff_remodeled: float
    mass_model: float
    mass_remodeled: float
    payoff_gap_bound: float


def distribution_distance(r: RemodeledFunctions) -> DistributionReport:
    """Exact sup distance between the distribution functions of gm under w dx and
    rho under W dx (both normalised by total mass), and of gm, rho under dx."""
    q = r.quad
    g = q.gm.cell_values()
    w = q.wm.cell_values()
    Wp = _path_weights(r, _boundary_fractions(r.schedule))
    rho = g  # rho on a piece equals gm on its path (exact)
    order = np.argsort(g, kind="stable")
    gs = g[order]
    last = np.r_[gs[1:] != gs[:-1], True]
    cw = np.cumsum(w[order])[last] / w.sum()
    cW = np.cumsum(Wp[order])[last] / Wp.sum()
    leb = float(np.max(np.abs(np.cumsum(np.ones_like(g))[last] / g.size
                              - np.cumsum(np.ones_like(rho))[last] / rho.size)))
    F = q.Fm.cell_values()
    level = g >= q.g
    pay_model = float(q.g * w[level].sum() / F.sum())
    pay_remod = float(q.g * Wp[level].sum() / F.sum())
    dist = float(np.max(np.abs(cw - cW)))
    # both payoffs integrate over the same level set and the masses agree, so the
    # gap is at most g * dist * <w> / <F>
    bound = float(q.g * dist * w.mean() / F.mean())
    return DistributionReport(leb, dist, pay_model, pay_remod, float(w.mean()), float(Wp.mean()),
                              bound)


@dataclass
class RedIntervalReport:
    red_paths: int
    measure_level_set: float
    measure_red: float
    representatives_checked: int
    mismatches: int

    @property
    def equal(self) -> bool:
        return self.mismatches == 0 and self.measure_level_set == self.measure_red


def red_interval_identity(r: RemodeledFunctions, reps_per_path: int = 4,
                          rng: np.random.Generator | None = None,
                          exhaustive_limit: int = 4 ** 9) -> RedIntervalReport:
    """{rho >= g} against the union of red pieces.

    Red pieces are the final-generation pieces whose path ends in a cell of
    {gm >= g}; for each such cell the collection is the set of digit vectors
    with j_i = q_i (mod 4).  Both sets are compared piece by piece: exhaustively
    for small schedules, otherwise on random representatives of every residue
    class (rho depends on a piece only through its residues)."""
    rng = rng or np.random.default_rng(0)
    q = r.quad
    N = q.generations
    red = set(np.nonzero(q.gm.cell_values() >= q.g)[0].tolist())
    ns = np.array([4 ** n for n in r.schedule.exponents], dtype=np.int64)
    total = int(np.prod(ns.astype(float)))
    if total <= exhaustive_limit:
        digits = np.array(list(product(*(range(int(n)) for n in ns))), dtype=np.int64)
    else:
        paths = np.array(list(product(range(4), repeat=N)), dtype=np.int64)
        reps = []
        for _ in range(reps_per_path):
            blocks = rng.integers(0, ns // 4, size=(paths.shape[0], N))
            reps.append(4 * blocks + paths)
        digits = np.concatenate(reps)
    rho = r.piece_values("rho", digits)
    in_level = rho >= q.g
    in_red = np.isin(_path_index(digits % 4), list(red))
    mism = int(np.sum(in_level != in_red))
    # measure of each set: every residue class occupies exactly 4**-N of [0, 1)
    classes = _path_index(digits % 4)
    lev_classes = set(classes[in_level].tolist())
    return RedIntervalReport(len(red), len(lev_classes) / 4 ** N, len(red) / 4 ** N,
                             int(digits.shape[0]), mism)


# --------------------------------------------------------------------------
# doubling of W


@dataclass
class WDoublingReport:
    constant: float
    worst: tuple
    pieces_checked: int


def _global_to_digits(idx: np.ndarray, exps) -> np.ndarray:
    k = len(exps)
    out = np.empty(idx.shape + (k,), dtype=np.int64)
    rest = idx.copy()
    for i in range(k - 1, -1, -1):
        n = 4 ** exps[i]
        out[..., i] = rest % n
        rest //= n
    return out


def w_doubling(r: RemodeledFunctions, max_supervisees: int = 2 ** 16,
               rng: np.random.Generator | None = None) -> WDoublingReport:
    """Largest ratio of averages of W over neighbouring pieces of equal length,
    and between a piece and its supervisee, at each generation's resolution.

    Averages of W over aligned blocks reduce to values at some generation because
    every finer zero-mean wave sums to zero over its supervisee.  Neighbours are
    taken periodically and across supervisee boundaries; the first and last eight
    pieces of each supervisee are always examined, together with eight interior
    pieces covering every son transition."""
    rng = rng or np.random.default_rng(0)
    exps = r.schedule.exponents
    best, worst, count = 1.0, None, 0
    for k in range(1, len(exps) + 1):
        n_sup = 4 ** int(sum(exps[:k - 1]))
        per = 4 ** exps[k - 1]
        total = n_sup * per
        sups = np.arange(n_sup, dtype=np.int64) if n_sup <= max_supervisees else \
            rng.integers(0, n_sup, size=max_supervisees, dtype=np.int64)
        local = np.unique(np.r_[np.arange(min(8, per)), per - 1 - np.arange(min(8, per)),
                                np.arange(min(per, 8), min(per, 16))])
        idx = (sups[:, None] * per + local[None, :]).ravel()
        nxt = (idx + 1) % total
        a = r.piece_values("W", _global_to_digits(idx, exps[:k]))
        b = r.piece_values("W", _global_to_digits(nxt, exps[:k]))
        parent = r.piece_values("W", _global_to_digits(idx, exps[:k]), generation=k - 1)
        for num, den, tag in ((a, b, "neighbour"), (b, a, "neighbour"),
                              (parent, a, "supervisee/piece"), (a, parent, "piece/supervisee")):
            ratio = num / den
            j = int(np.argmax(ratio))
            if ratio[j] > best:
                best = float(ratio[j])
                worst = (tag, k, int(idx[j]))
        count += idx.size
    return WDoublingReport(best, worst, count)


# --------------------------------------------------------------------------
# Hilbert transform of the remodeled phi


@dataclass
class ThetaReport:
    M: int
    theta_measure: float
    delta: float
    max_theta: float
    main_sum: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    payoff_measure: float = float("nan")
    payoff_bound: float = float("nan")


def hilbert_remodel_decomposition(r: RemodeledFunctions, points_per_piece: int = 4,
                                  delta: float = 0.1, limit: int = 2 ** 22,
                                  pipeline_delta: float = 0.1) -> ThetaReport:
    """-H(phi) = sum_k b_I xi_J sqc_J + Theta on the uniform grid.

    xi_J is the discrete conjugate factor of a square wave with the period of
    generation k on the same grid, so Theta only measures the effect of the
    amplitude changes between supervisees."""
    q = r.quad
    exps = r.schedule.exponents
    S = int(sum(exps))
    M = 4 ** S * points_per_piece
    if points_per_piece < 1:
        raise ValueError("grid too coarse: need at least one point per piece")
    if M > limit:
        raise ValueError(f"grid of {M} points exceeds {limit}")
    x = (np.arange(M) + 0.5) / M
    d = r.schedule.digits(x)
    phi = r.piece_values("phi", d)
    Hphi = periodic_hilbert_transform(phi).values
    main = np.zeros(M)
    paths = d % 4
    for i in range(len(exps)):
        sup = _path_index(paths[:, :i])
        amp = q.gm.coeffs[i][sup]
        pts_per_step = 4 ** (S - int(sum(exps[:i + 1]))) * points_per_piece
        P = 4 * pts_per_step
        s, c = square_waves(P)
        xiP = periodic_hilbert_transform(s).values * c
        phase = np.arange(M) % P
        main += amp * xiP[phase] * c[phase]
    theta = -Hphi - main
    rep = ThetaReport(M, float(np.mean(np.abs(theta) > delta)), delta,
                      float(np.max(np.abs(theta))), main, theta)
    # the closing estimate: W-measure of {main >= (delta/4) g}
    W = r.piece_values("W", d)
    lvl = main >= pipeline_delta / 4 * q.g
    rep.payoff_measure = float(np.sum(W[lvl]) / M)
    l1 = float(np.mean(np.abs(phi) * W))
    rep.payoff_bound = pipeline_delta / 4 * q.payoff() * l1 / q.g
    return rep


def dumps(obj) -> str:
    return json.dumps(obj.to_json())
