"""Major-arc resolution of the time axis and the three-piece split of K_N.

Time functions are written in the variable s = t / (2 pi). The kernel K_N
factorizes as (time window) x (periodic sums) x (line integral), and every
piece of the split is K_N multiplied by a function of t alone, so each
piece is stored through its time weight.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..spectral import eta1
from .arithmetic import divisor_counts, farey_bump_coeffs
from .weyl import T_WINDOW, kernel_KN, line_factor_sup, weyl_sup_x, window

__all__ = [
    "eta_band",
    "eta_ge",
    "major_arc_bump",
    "resolution_e",
    "resolution_pieces",
    "partition_error",
    "lambda_window",
    "ladder_K",
    "level_L",
    "TimeWeights",
    "time_weights",
    "KernelDecomposition",
    "kernel_decomposition",
]

DELTA = 1.0 / 100


def eta_band(s, j: int) -> np.ndarray:
    """eta_j(s) = eta1(2^j s) - eta1(2^{j+1} s)."""
    s = np.asarray(s, dtype=float)
    return eta1(2.0**j * s) - eta1(2.0 ** (j + 1) * s)


def eta_ge(s, j: int) -> np.ndarray:
    """eta_{>=j}(s) = eta1(2^j s)."""
    return eta1(2.0**j * np.asarray(s, dtype=float))


def _coprime_residues(q: int):
    return [a for a in range(q) if math.gcd(a, q) == 1]


def major_arc_bump(s, k: int, J: int, bump) -> np.ndarray:
    """sum over q in [2^k, 2^{k+1}) and a coprime to q of bump(s - a/q, J).

    The bump is supported in |u| < 2^{1-J} and q 2^{1-J} < 1, so only the
    residues next to s q contribute.
    """
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape)
    for q in range(2**k, 2 ** (k + 1)):
        a0 = np.rint(s * q)
        for da in (-1, 0, 1):
            a = a0 + da
            ok = np.gcd(a.astype(np.int64), q) == 1
            out += np.where(ok, bump(s - a / q, J), 0.0)
    return out


def _J(K: int, k: int, j: int) -> int:
    return j + K + k + 10


def _p(s, K: int, k: int, j: int) -> np.ndarray:
    if j <= K - k - 1:
        return major_arc_bump(s, k, _J(K, k, j), eta_band)
    return major_arc_bump(s, k, 2 * K + 10, eta_ge)


def resolution_pieces(s, K: int) -> dict:
    """p_{k,j}(s) for 0 <= k < K, 0 <= j <= K - k, each built from the band bumps."""
    return {(k, j): _p(s, K, k, j) for k in range(K) for j in range(K - k + 1)}


def resolution_e(s, K: int) -> np.ndarray:
    """e(s) from the telescoped form 1 - sum_k sum_{q,a} eta1(2^{K+k+10}(s - a/q))."""
    s = np.asarray(s, dtype=float)
    tot = np.zeros(s.shape)
    for k in range(K):
        tot += major_arc_bump(s, k, K + k + 10, eta_ge)
    return 1.0 - tot


def partition_error(s, K: int) -> float:
    """max |sum p_{k,j} + e - 1| on the given s samples."""
    total = resolution_e(s, K) + sum(resolution_pieces(s, K).values())
    return float(np.abs(total - 1.0).max())


def lambda_window(N: int, p0: float) -> tuple[float, float]:
    return float(N) ** ((2 * p0 - 6) / (p0 - 2)), 2.0**10 * N * N


def ladder_K(N: int) -> int:
    """K with N in [2^{K+4}, 2^{K+5})."""
    return int(N).bit_length() - 5


def level_L(N: int, lam: float, p0: float) -> int:
    """L with lam^{p0-2} N^{6-2p0} in [2^L, 2^{L+1})."""
    v = (p0 - 2) * math.log2(lam) + (6 - 2 * p0) * math.log2(N)
    L = math.floor(v + 1e-12)
    return int(L)


def _rho(K: int, k: int, j: int) -> float:
    return 2.0**-j if j <= K - k - 1 else 2.0 ** (-K + k + 1)


def _bump_hat(kind: str, omega: np.ndarray, n: int = 4096) -> np.ndarray:
    # chi(omega) = int g(x) e^{-i x omega} dx for the even bump g on [-2, 2]
    x = np.linspace(-2.0, 2.0, n, endpoint=False)
    g = eta1(x) - eta1(2 * x) if kind == "band" else eta1(x)
    h = 4.0 / n
    out = np.empty(omega.shape)
    for i in range(0, omega.size, 256):
        out[i : i + 256] = h * (np.cos(np.outer(omega[i : i + 256], x)) @ g)
    return out


def _u_part_coeffs(K: int, L: int, k: int, j: int, max_terms: int):
    """Fourier modes m in U and coefficients of p_{k,j}(s) = sum_m coef_m e^{2 pi i m s}."""
    J = _J(K, k, j) if j <= K - k - 1 else 2 * K + 10
    mmax = 2 ** (j + K + 2 * k)
    if 2 * mmax + 1 > max_terms:
        raise ValueError(f"Fourier split needs {2 * mmax + 1} modes; raise max_terms or lower N")
    m = np.arange(-mmax, mmax + 1, dtype=np.int64)
    Q = 2 ** (k + 1)
    keep = divisor_counts(m, Q) >= 2.0 ** ((2 * K - L) / 4)
    m = m[keep]
    if m.size == 0:
        return m, np.zeros(0)
    S = range(2**k, 2 ** (k + 1))
    cm = farey_bump_coeffs(S, 8 * Q, Q, m).astype(float)
    chi = _bump_hat("band" if j <= K - k - 1 else "ge", 2 * math.pi * m / 2.0**J)
    return m, 2.0**-J * chi * cm


@dataclass
class TimeWeights:
    """Weights w_i(t) with K^i = K_N w_i and w_1 + w_2 + w_3 = 1 on the window."""

    K: int
    L: int
    case: int
    trivial: bool
    margin: int
    b: int
    rho: dict
    u_modes: dict

    def __call__(self, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        s = np.asarray(t, dtype=float) / (2 * math.pi)
        z = np.zeros(s.shape)
        if self.trivial:
            return z, np.ones(s.shape), z.copy()
        K, L = self.K, self.L
        w2 = eta_ge(s, L - self.margin)
        band = eta_ge(s, 4) - eta_ge(s, L - self.margin)
        pieces = resolution_pieces(s, K)
        base = resolution_e(s, K)
        rest2 = np.zeros(s.shape)
        rest3 = np.zeros(s.shape)
        if self.case == 1:
            for (k, j), p in pieces.items():
                if 2 * j <= L:
                    base = base + p
                else:
                    r = self.rho[(k, j)]
                    base = base + r * pieces[(k, 0)]
                    rest2 += p - r * pieces[(k, 0)]
        else:
            for (k, j), p in pieces.items():
                if 2 * j <= L - self.b:
                    base = base + p
                else:
                    m, coef = self.u_modes[(k, j)]
                    pu = (np.exp(2j * math.pi * np.multiply.outer(s, m)) @ coef).real if m.size else z
                    rest3 += pu
                    rest2 += p - pu
        return band * base, w2 + band * rest2, band * rest3


def time_weights(N: int, lam: float, p0: float, margin: int = 40, b: int = 8, delta: float = DELTA,
                 max_terms: int = 1 << 20) -> TimeWeights:
    lo, hi = lambda_window(N, p0)
    if p0 <= 18 / 5:
        raise ValueError(f"p0 must exceed 18/5, got {p0}")
    if N < 32:
        raise ValueError(f"N = {N} is too small to form the dyadic ladders (need N >= 32)")
    if not lo * (1 - 1e-12) <= lam <= hi * (1 + 1e-12):
        raise ValueError(f"lambda = {lam:g} outside the admissible window [{lo:g}, {hi:g}]")
    K = ladder_K(N)
    L = level_L(N, lam, p0)
    if not 0 <= L <= 2 * K + 20:
        warnings.warn(f"L = {L} outside [0, 2K+20] = [0, {2 * K + 20}]", RuntimeWarning, stacklevel=2)
    case = 1 if L <= 2 * K - delta * K else 2
    trivial = L - margin < 5
    rho = {(k, j): _rho(K, k, j) for k in range(K) for j in range(K - k + 1)}
    u_modes = {}
    if case == 2 and not trivial:
        for k in range(K):
            for j in range(K - k + 1):
                if 2 * j > L - b:
                    u_modes[(k, j)] = _u_part_coeffs(K, L, k, j, max_terms)
    return TimeWeights(K, L, case, trivial, margin, b, rho, u_modes)


def _time_grid(K: int, per_scale: int = 16):
    # finest time structure has width 2 pi 2^{-(2K+10)}
    n = 1 << (2 * K + 10 - 3 + int(math.log2(per_scale)))
    t = np.linspace(-T_WINDOW, T_WINDOW, n, endpoint=False)
    return t, t[1] - t[0]


def _hat_norms(h: np.ndarray, dt: float, r: float, pad: int = 4):
    H = np.fft.fft(h, h.size * pad) * dt
    dmu = 2 * math.pi / (h.size * pad * dt)
    return float(np.abs(H).max()), float((np.sum(np.abs(H) ** r) * dmu) ** (1 / r))


@dataclass
class KernelDecomposition:
    N: int
    lam: float
    p0: float
    K: int
    L: int
    case: int
    trivial: bool
    margin: int
    b: int
    delta: float
    points: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)
    KN: np.ndarray = field(repr=False)
    K1: np.ndarray = field(repr=False)
    K2: np.ndarray = field(repr=False)
    K3: np.ndarray = field(repr=False)
    sum_error: float
    partition_error: float
    sup_K1: float
    sup_K1_over_lam2: float
    r: float
    k2_hat_sup: float
    k2_shape: float
    k3_hat_lr: float
    k3_shape: float
    quadrature_ok: bool

    def summary(self) -> dict:
        keys = ["N", "lam", "p0", "K", "L", "case", "trivial", "margin", "b", "delta", "sum_error",
                "partition_error", "sup_K1", "sup_K1_over_lam2", "r", "k2_hat_sup", "k2_shape", "k3_hat_lr",
                "k3_shape", "quadrature_ok"]
        return {k: getattr(self, k) for k in keys}


def kernel_decomposition(N: int, lam: float, p0: float, n_samples: int = 10_000, seed: int = 0,
                         margin: int = 40, b: int = 8, delta: float = DELTA, r: float = 2.0,
                         x1_range: float = 4.0, tol: float = 1e-12, samples=None) -> KernelDecomposition:
    """Split K_N = K^1 + K^2 + K^3 and sample the pieces.

    ``margin`` is the offset in the cut eta1(2^{L-margin} t / 2 pi) that
    separates the central time piece; with the default the split is
    trivial (K^2 = K_N) unless L >= margin + 5. ``samples`` reuses the
    ``(points, times, KN, converged)`` arrays of an earlier call.
    """
    tw = time_weights(N, lam, p0, margin, b, delta)
    if samples is None:
        rng = np.random.default_rng(seed)
        pts = np.empty((n_samples, 4))
        pts[:, 0] = rng.uniform(-x1_range, x1_range, n_samples)
        pts[:, 1:] = rng.uniform(0, 2 * math.pi, (n_samples, 3))
        ts = rng.uniform(-T_WINDOW, T_WINDOW, n_samples)
        KN, ok = kernel_KN(pts, ts, N, tol=tol, return_flags=True)
    else:
        pts, ts, KN, ok = samples
    w1, w2, w3 = tw(ts)
    K1, K2, K3 = KN * w1, KN * w2, KN * w3
    scale = max(1.0, float(np.abs(KN).max()))
    sum_err = float(np.abs(K1 + K2 + K3 - KN).max() / scale)

    tg, dt = _time_grid(tw.K)
    s = tg / (2 * math.pi)
    perr = partition_error(s, tw.K)
    g1, g2, g3 = tw(tg)
    win = window(tg)
    # K_N factorizes, so sup over x of |K^1(., t)| is a product of 1-D sups
    coarse = tg[:: max(1, tg.size // 512)]
    c1 = np.abs(tw(coarse)[0]) * window(coarse)
    live = c1 > 0
    sup_t = 0.0
    if np.any(live):
        per = weyl_sup_x(coarse[live], N) ** 3
        line = np.array([line_factor_sup(t, N) for t in coarse[live]])
        sup_t = float(np.max(c1[live] * per * line))
    sup1 = max(sup_t, float(np.abs(K1).max()))

    # Fourier side: F[K_N h] = (2 pi)^4 eta(xi/N)^2 ... hat(h window)(tau + |xi|^2)
    c4 = (2 * math.pi) ** 4
    n = np.arange(-2 * N, 2 * N + 1)
    xi = np.linspace(-2 * N, 2 * N, 8 * N + 1)
    mult_lr = (np.sum(eta1(n / N) ** (2 * r)) ** 3 * np.sum(eta1(xi / N) ** (2 * r)) * (xi[1] - xi[0])) ** (1 / r)
    sup2, _ = _hat_norms(win * g2, dt, r)
    _, lr3 = _hat_norms(win * g3, dt, r)
    dist = float(N) ** (2 * p0 - 6) * lam ** (-p0)
    return KernelDecomposition(
        N, float(lam), float(p0), tw.K, tw.L, tw.case, tw.trivial, margin, b, delta, pts, ts, KN, K1, K2, K3,
        sum_err, perr, sup1, sup1 / lam**2, r, c4 * sup2, lam**2 * dist, c4 * mult_lr * lr3,
        lam**2 * dist ** ((r - 1) / r), bool(ok.all()),
    )
