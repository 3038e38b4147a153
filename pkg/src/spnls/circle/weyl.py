"""Weyl sums, the kernel K_N and the major-arc bound for the periodic factors."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..spectral import eta1
from .arithmetic import dirichlet_approx

__all__ = [
    "QuadratureWarning",
    "window",
    "weyl_sum",
    "weyl_sup_x",
    "line_factor",
    "line_factor_sup",
    "kernel_KN",
    "WeylBoundReport",
    "weyl_bound_check",
    "T_WINDOW",
]

# K_N vanishes for |t| >= 2 pi 2^{-4}
T_WINDOW = 2 * math.pi / 16

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


class QuadratureWarning(UserWarning):
    """The adaptive line-direction quadrature did not reach its tolerance."""


def window(t) -> np.ndarray:
    """Time cutoff eta1(2^5 t / 2 pi) of the kernel."""
    return eta1(32.0 * np.asarray(t, dtype=float) / (2 * math.pi))


def _reduce(t):
    # e^{-i t n^2} is 2 pi periodic in t
    return np.remainder(np.asarray(t, dtype=float) + math.pi, 2 * math.pi) - math.pi


def weyl_sum(x, t, N: int) -> np.ndarray:
    """S(x, t) = sum_{|n| <= 2N} e^{-i t n^2 + i x n} eta1(n/N)^2, broadcast over x and t."""
    if N < 1:
        raise ValueError("N must be >= 1")
    n = np.arange(-2 * N, 2 * N + 1)
    c = eta1(n / N) ** 2
    x, t = np.broadcast_arrays(np.asarray(x, float), _reduce(t))
    ph = -t[..., None] * (n * n) + x[..., None] * n
    out = np.exp(1j * ph) @ c
    return out if out.ndim else complex(out)


def weyl_sup_x(t, N: int, oversample: int = 8) -> np.ndarray:
    """max over x on a uniform grid of oversample*N points of |S(x, t)|."""
    t = np.atleast_1d(_reduce(t))
    n = np.arange(-2 * N, 2 * N + 1)
    c = eta1(n / N) ** 2
    M = max(oversample * N, 4 * N + 1)
    M = 1 << (M - 1).bit_length()
    coef = np.zeros((t.size, M), dtype=complex)
    coef[:, n % M] = c * np.exp(-1j * np.outer(t, n * n))
    vals = np.fft.ifft(coef, axis=1) * M
    return np.abs(vals).max(axis=1)


def _gl(f, a, b, panels):
    edges = np.linspace(a, b, panels + 1)
    h = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + h[:, None] * _GL_X).ravel()
    return np.sum(f(nodes).reshape(panels, -1) @ _GL_W * h)


def _line_one(x1: float, t: float, N: int, tol: float, max_panels: int):
    def flat(xi):
        return np.exp(1j * (x1 - t * xi) * xi)

    def edge(xi):
        return flat(xi) * eta1(xi / N) ** 2

    cuts = [-2.0 * N, -1.0 * N, 1.0 * N, 2.0 * N]
    if t != 0:
        xs = x1 / (2 * t)
        if -2 * N < xs < 2 * N:
            cuts.append(xs)
    cuts = sorted(set(cuts))
    total, ok = 0.0 + 0.0j, True
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a <= 0:
            continue
        # the bump is identically 1 on [-N, N]
        f = flat if -N <= a and b <= N else edge
        # phase derivative is -2 t xi + x1; start with one 16-node panel per 2 pi of phase
        rate = max(abs(-2 * t * a + x1), abs(-2 * t * b + x1))
        panels = max(2, int(math.ceil(rate * (b - a) / (2 * math.pi))))
        prev = _gl(f, a, b, panels)
        while True:
            panels *= 2
            cur = _gl(f, a, b, panels)
            if abs(cur - prev) <= tol * max(1.0, abs(cur)):
                break
            prev = cur
            if panels > max_panels:
                ok = False
                break
        total += cur
    return total, ok


def line_factor(x1, t, N: int, tol: float = 1e-12, max_panels: int = 1 << 16):
    """I(x1, t) = int e^{-i t xi^2 + i x1 xi} eta1(xi/N)^2 dxi by adaptive Gauss-Legendre.

    Returns ``(values, converged)``; panels are split at +-N, +-2N and the
    stationary point x1/(2t).
    """
    x1, t = np.broadcast_arrays(np.asarray(x1, float), np.asarray(t, float))
    out = np.zeros(x1.shape, dtype=complex)
    ok = np.ones(x1.shape, dtype=bool)
    for idx in np.ndindex(x1.shape):
        out[idx], ok[idx] = _line_one(float(x1[idx]), float(t[idx]), N, tol, max_panels)
    return out, ok


def line_factor_sup(t: float, N: int, pad: int = 4) -> float:
    """sup over x1 of |I(x1, t)| from a zero-padded FFT of the integrand."""
    rate = 4 * N * abs(t) + 1.0
    h = min(0.25, math.pi / (8 * rate))
    n = 1 << int(math.ceil(math.log2(4 * N / h)))
    xi = (np.arange(n) - n // 2) * h
    g = np.exp(-1j * t * xi * xi) * eta1(xi / N) ** 2
    vals = np.fft.fft(g, n * pad) * h
    return float(np.abs(vals).max())


def kernel_KN(x, t, N: int, tol: float = 1e-12, return_flags: bool = False):
    """K_N(x, t) = window(t) S(x2,t) S(x3,t) S(x4,t) I(x1, t).

    ``x`` has shape (..., 4) and ``t`` broadcasts against ``x[..., 0]``.
    Quadrature is skipped where the window vanishes.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 4:
        raise ValueError("points must have 4 coordinates (x1, x2, x3, x4)")
    shape = x.shape[:-1]
    t = np.broadcast_to(np.asarray(t, float), shape).reshape(-1)
    x = x.reshape(-1, 4)
    w = np.asarray(window(t), dtype=float)
    out = np.zeros(t.shape, dtype=complex)
    flags = np.ones(t.shape, dtype=bool)
    live = w != 0
    if np.any(live):
        xl, tl = x[live], t[live]
        per = weyl_sum(xl[:, 1], tl, N) * weyl_sum(xl[:, 2], tl, N) * weyl_sum(xl[:, 3], tl, N)
        line, ok = line_factor(xl[:, 0], tl, N, tol)
        out[live] = w[live] * per * line
        flags[live] = ok
    if not flags.all():
        warnings.warn(f"line quadrature unconverged at {int((~flags).sum())} points", QuadratureWarning,
                      stacklevel=2)
    out, flags = out.reshape(shape), flags.reshape(shape)
    if not shape:
        out, flags = complex(out), bool(flags)
    if return_flags:
        return out, flags
    return out


@dataclass
class WeylBoundReport:
    N: int
    t: np.ndarray
    a: np.ndarray
    q: np.ndarray
    beta: np.ndarray
    sup_S: np.ndarray
    ratios: np.ndarray
    max_ratio: float

    def rows(self):
        return [(self.N, float(t), int(a), int(q), float(b), float(s), float(r))
                for t, a, q, b, s, r in zip(self.t, self.a, self.q, self.beta, self.sup_S, self.ratios)]


def weyl_bound_check(N: int, ts=None, n_t: int = 256, oversample: int = 8) -> WeylBoundReport:
    """max over t and sampled x of |S| sqrt(q) (1 + N |beta|^{1/2}) / N."""
    if ts is None:
        ts = T_WINDOW * (np.arange(n_t) + 0.5) / n_t
    ts = np.asarray(ts, dtype=float)
    if np.any(np.abs(ts) >= T_WINDOW):
        raise ValueError("t-grid must lie inside the kernel window |t| < 2 pi / 16")
    approx = [dirichlet_approx(t, N) for t in ts]
    a = np.array([r.a for r in approx])
    q = np.array([r.q for r in approx])
    beta = np.array([r.beta for r in approx])
    sup = weyl_sup_x(ts, N, oversample)
    ratios = sup * np.sqrt(q) * (1 + N * np.sqrt(np.abs(beta))) / N
    return WeylBoundReport(N, ts, a, q, beta, sup, ratios, float(ratios.max()))
