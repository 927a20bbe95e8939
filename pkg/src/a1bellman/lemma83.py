"""Monte-Carlo anti-concentration checks for sums of scaled copies of xi.

The variables are xi_k ~ xi(U) with U uniform on [0, 1), sampled from the tabulated
conjugate factor, and the statistic is

    P{ |sum_k theta_k xi_k + a| >= delta * (sum_k theta_k**2) ** 0.5 }.

delta is calibrated once from the sampled distribution and frozen as ``DELTA``.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from .hilbert import xi_table

log = logging.getLogger(__name__)

DELTA = 0.1
C0 = 1.0 / 8.0
CONFIDENCE = 0.99
TABLE_BITS = 20


@dataclass
class MonteCarloResult:
    m: int
    a: float
    delta: float
    samples: int
    seed: int | None
    estimate: float
    ci_low: float
    ci_high: float

    @property
    def half_width(self) -> float:
        return max(self.estimate - self.ci_low, self.ci_high - self.estimate)

    @property
    def passed(self) -> bool:
        return self.estimate - self.half_width >= self.delta


def _interval(hits: int, n: int, confidence: float) -> tuple[float, float]:
    ci = binomtest(hits, n).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def sample_sums(thetas, samples: int, rng: np.random.Generator, chunk: int = 1 << 14,
                table: np.ndarray | None = None) -> np.ndarray:
    """Independent draws of sum_k theta_k xi_k."""
    thetas = np.asarray(thetas, dtype=float)
    if samples <= 0:
        raise ValueError("samples must be positive")
    if thetas.ndim != 1 or thetas.size == 0 or np.any(thetas <= 0):
        raise ValueError("thetas must be a non-empty list of positive reals")
    table = xi_table(2 ** TABLE_BITS) if table is None else table
    out = np.empty(samples)
    step = max(1, chunk * 64 // thetas.size)
    for lo in range(0, samples, step):
        n = min(step, samples - lo)
        idx = rng.integers(0, table.size, size=(n, thetas.size))
        out[lo:lo + n] = table[idx] @ thetas
    return out


def lemma83_sweep(thetas, a_values, samples: int, delta: float = DELTA, seed: int = 0,
                  confidence: float = CONFIDENCE, log_path: str | Path | None = None
                  ) -> list[MonteCarloResult]:
    """One set of sums reused for every shift a."""
    rng = np.random.default_rng(seed)
    thetas = np.asarray(thetas, dtype=float)
    sums = sample_sums(thetas, samples, rng)
    scale = delta * math.sqrt(float(thetas @ thetas))
    out = []
    for a in a_values:
        hits = int(np.count_nonzero(np.abs(sums + a) >= scale))
        lo, hi = _interval(hits, samples, confidence)
        out.append(MonteCarloResult(thetas.size, float(a), delta, samples, seed,
                                    hits / samples, lo, hi))
    if log_path is not None:
        write_log(out, log_path)
    return out


def lemma83_monte_carlo(thetas, a: float, samples: int, delta: float = DELTA, seed: int = 0,
                        confidence: float = CONFIDENCE, log_path=None) -> MonteCarloResult:
    return lemma83_sweep(thetas, [a], samples, delta, seed, confidence, log_path)[0]


def write_log(results, path: str | Path) -> None:
    """Append {seed, samples, estimate, CI} rows."""
    path = Path(path)
    new = not path.exists()
    with path.open("a", newline="") as fh:
        wr = csv.writer(fh)
        if new:
            fh.write("# schema=v1\n")
            wr.writerow(["seed", "samples", "m", "a", "delta", "estimate", "ci_low", "ci_high"])
        for r in results:
            wr.writerow([r.seed, r.samples, r.m, r.a, r.delta, f"{r.estimate:.6f}",
                         f"{r.ci_low:.6f}", f"{r.ci_high:.6f}"])


def calibrate_delta(ms=(1, 16, 64, 256), samples: int = 200_000, seed: int = 7,
                    grid=None, confidence: float = CONFIDENCE) -> float:
    """Largest delta on a grid such that the lower confidence bound of the
    probability stays >= delta for theta_k = 1/sqrt(m) and the least favourable
    shift a = -E[sum] (centred sum) as well as a = 0."""
    grid = np.round(np.arange(0.01, 1.0, 0.01), 2) if grid is None else np.asarray(grid)
    mean = float(xi_table(2 ** TABLE_BITS).mean())
    rng = np.random.default_rng(seed)
    ok = np.ones(grid.size, dtype=bool)
    for m in ms:
        th = np.full(m, 1 / math.sqrt(m))
        sums = sample_sums(th, samples, rng)
        for a in (0.0, -mean * th.sum()):
            dev = np.sort(np.abs(sums + a))
            for i, d in enumerate(grid):
                if not ok[i]:
                    continue
                hits = samples - int(np.searchsorted(dev, d, side="left"))
                lo, _ = _interval(hits, samples, confidence)
                ok[i] = lo >= d
    good = grid[ok & np.minimum.accumulate(ok)]
    return float(good[-1]) if good.size else 0.0


@dataclass
class CaseSplitReport:
    case: int
    sum_theta_sq: float
    probability: float
    threshold: float
    chebyshev_bound: float
    remodeled_probability: float
    remodeled_threshold: float
    delegated: MonteCarloResult | None

    @property
    def passed(self) -> bool:
        if self.case == 2:
            return self.delegated.passed
        return self.probability >= self.threshold and self.remodeled_probability >= self.remodeled_threshold

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def remodeled_sums(thetas, samples: int, rng: np.random.Generator, digits: int = TABLE_BITS // 2,
                   chunk: int = 1 << 14) -> np.ndarray:
    """Draws of sum_i theta_i xi(4**i y) for y uniform: x_i reads the base-4 digit
    window i .. i + digits - 1 of y, so neighbouring terms share digits."""
    thetas = np.asarray(thetas, dtype=float)
    table = xi_table(4 ** digits)
    mod = 4 ** digits
    out = np.empty(samples)
    for lo in range(0, samples, chunk):
        n = min(chunk, samples - lo)
        d = rng.integers(0, 4, size=(n, thetas.size + digits - 1), dtype=np.int64)
        idx = np.zeros(n, dtype=np.int64)
        for t in range(digits):
            idx = 4 * idx + d[:, t]
        acc = thetas[0] * table[idx]
        for i in range(1, thetas.size):
            idx = (4 * idx) % mod + d[:, i + digits - 1]
            acc += thetas[i] * table[idx]
        out[lo:lo + n] = acc
    return out


def case_split_check(thetas, samples: int = 200_000, seed: int = 0, delta: float = DELTA,
                     c0: float = C0, a: float = 0.0) -> CaseSplitReport:
    """Route by sum theta**2 against c0.  Case 1 (strictly below c0) samples
    P{sum theta xi >= 1/2} >= 1/2 and the digit-window analogue >= 1/4; case 2
    runs the anti-concentration estimate."""
    thetas = np.asarray(thetas, dtype=float)
    table = xi_table(2 ** TABLE_BITS)
    mean = float(table.mean())
    norm = float(thetas.sum() * mean)
    if not math.isclose(norm, 1.0, rel_tol=1e-9):
        raise ValueError(f"thetas not normalised: sum theta * E[xi] = {norm}")
    s2 = float(thetas @ thetas)
    if s2 >= c0:
        res = lemma83_monte_carlo(thetas, a, samples, delta, seed)
        return CaseSplitReport(2, s2, res.estimate, delta, float("nan"), float("nan"),
                               float("nan"), res)
    rng = np.random.default_rng(seed)
    p = float(np.mean(sample_sums(thetas, samples, rng) >= 0.5))
    var = float(table.var())
    cheb = max(0.0, 1 - 4 * s2 * var)
    pr = float(np.mean(remodeled_sums(thetas, samples, rng) > 0.5))
    return CaseSplitReport(1, s2, p, 0.5, cheb, pr, 0.25, None)


def normalised_thetas(m: int, kind: str = "flat") -> np.ndarray:
    """theta_k with sum theta_k E[xi] = 1: equal weights, or one dominant index."""
    mean = float(xi_table(2 ** TABLE_BITS).mean())
    if kind == "flat":
        th = np.ones(m)
    elif kind == "spike":
        th = np.full(m, 1e-3)
        th[0] = 1.0
    else:
        raise ValueError("kind must be 'flat' or 'spike'")
    return th / (th.sum() * mean)
