"""Discrete conjugate function on the circle and the square sine / square cosine pair.

Samples live at the cell centres x_j = (j + 1/2)/M.  The transform is the Fourier
multiplier -i sgn(k) with the Nyquist mode removed, so cos(2 pi x) -> sin(2 pi x).
The same operator is the circular convolution with the kernel

    h[j] = (2/M) cot(pi j / M)  for odd j,   0 for even j,

which gives an independent route used for cross-checks.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import fft, ifft

from .dyadic import G_PATTERN, H_PATTERN

log = logging.getLogger(__name__)


@dataclass
class HilbertResult:
    values: np.ndarray
    removed_mean: float


def _multiplier(M: int) -> np.ndarray:
    k = np.fft.fftfreq(M, 1.0 / M)
    mult = -1j * np.sign(k)
    if M % 2 == 0:
        mult[M // 2] = 0.0
    return mult


def hilbert_kernel(M: int) -> np.ndarray:
    j = np.arange(M)
    out = np.zeros(M)
    odd = j % 2 == 1
    out[odd] = (2.0 / M) / np.tan(np.pi * j[odd] / M)
    return out


def periodic_hilbert_transform(f, method: str = "fft", mean_tol: float = 1e-12) -> HilbertResult:
    """Conjugate function of a sampled 1-periodic function (M a power of two).

    The transform ignores constants; a nonzero mean is removed and reported."""
    f = np.asarray(f, dtype=float)
    M = f.shape[-1]
    if M < 2 or M & (M - 1):
        raise ValueError("the number of samples must be a power of two")
    mean = float(f.mean())
    g = f - mean
    if abs(mean) > mean_tol:
        log.info("removed mean %.3g before the conjugate transform", mean)
    if method == "fft":
        out = np.real(ifft(fft(g) * _multiplier(M)))
    elif method == "kernel":
        out = _kernel_sum(g)
    else:
        raise ValueError("method must be 'fft' or 'kernel'")
    return HilbertResult(out, mean)


def _kernel_sum(g: np.ndarray, block: int = 1024) -> np.ndarray:
    """Direct O(M^2) circular convolution, blocked to bound memory."""
    M = g.shape[0]
    h = hilbert_kernel(M)
    out = np.empty(M)
    j = np.arange(M)
    for lo in range(0, M, block):
        i = np.arange(lo, min(lo + block, M))
        out[i] = h[(i[:, None] - j[None, :]) % M] @ g
    return out


def cell_centres(M: int) -> np.ndarray:
    return (np.arange(M) + 0.5) / M


def square_waves(M: int, periods: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """sqsin (H pattern) and sqcos (G pattern) with ``periods`` periods on M points."""
    if M % (4 * periods):
        raise ValueError("each quarter period needs a whole number of points")
    q = (np.arange(M) * 4 * periods // M) % 4
    return H_PATTERN[q], G_PATTERN[q]


def sqsin_conjugate_exact(x) -> np.ndarray:
    """Conjugate function of the continuous square sine: -(2/pi) log|tan(pi x)|."""
    return -(2 / np.pi) * np.log(np.abs(np.tan(np.pi * np.asarray(x, dtype=float))))


@lru_cache(maxsize=8)
def xi_table(M: int = 2 ** 20) -> np.ndarray:
    """xi = H(sqsin) * sqcos on M cell centres (sqcos = +-1)."""
    s, c = square_waves(M)
    xi = periodic_hilbert_transform(s).values * c
    xi.setflags(write=False)
    return xi


@dataclass
class XiReport:
    M: int
    sign_agreement: float
    zeros: tuple[float, float]
    zero_errors_cells: tuple[float, float]
    min_xi_away: float
    mean_xi: float
    max_analytic_gap: float
    skew_defect: float


def _zero_crossing(y: np.ndarray, x: np.ndarray, near: float) -> float:
    i0 = int(np.argmin(np.abs(x - near)))
    lo, hi = max(i0 - 8, 0), min(i0 + 8, len(x) - 1)
    for i in range(lo, hi):
        if y[i] == 0:
            return float(x[i])
        if y[i] * y[i + 1] < 0:
            return float(x[i] - y[i] * (x[i + 1] - x[i]) / (y[i + 1] - y[i]))
    return float(x[i0])


def skew_symmetry_defect(M: int, rng: np.random.Generator, trials: int = 3) -> float:
    """max |<Hf, g> + <f, Hg>| over random mean-zero pairs, relative to |f||g|."""
    worst = 0.0
    for _ in range(trials):
        f, g = rng.standard_normal((2, M))
        f -= f.mean()
        g -= g.mean()
        Hf = periodic_hilbert_transform(f).values
        Hg = periodic_hilbert_transform(g).values
        d = abs(Hf @ g + f @ Hg) / (np.linalg.norm(f) * np.linalg.norm(g))
        worst = max(worst, float(d))
    return worst


def xi_report(M: int = 2 ** 16, away_cells: int = 4, rng=None) -> XiReport:
    rng = rng or np.random.default_rng(0)
    x = cell_centres(M)
    s, c = square_waves(M)
    Hs = periodic_hilbert_transform(s).values
    away = np.ones(M, bool)
    for p in (0.0, 0.5, 1.0):
        away &= np.abs(x - p) >= away_cells / M
    agree = (np.sign(Hs) == np.sign(c)) | (Hs == 0)
    z1, z2 = _zero_crossing(Hs, x, 0.25), _zero_crossing(Hs, x, 0.75)
    xi = Hs * c
    exact = sqsin_conjugate_exact(x)
    return XiReport(M, float(agree[away].mean()), (z1, z2),
                    (abs(z1 - 0.25) * M, abs(z2 - 0.75) * M),
                    float(xi[away].min()), float(xi.mean()),
                    float(np.max(np.abs(Hs - exact)[away])),
                    skew_symmetry_defect(M, rng))
