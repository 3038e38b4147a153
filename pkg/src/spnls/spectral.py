"""Bump functions, Fourier multipliers and the free propagator on R x T^3.

All projectors act on :class:`~spnls.grid.Spectrum` objects by pointwise
multiplication of the coefficient array. The multiplier arrays themselves are
exposed (``*_multiplier``) so that scans can apply them to raw arrays without
re-validating.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .grid import Field, GridError, GridSpec, Spectrum, fftn, ifftn

__all__ = [
    "eta1",
    "eta4",
    "eta_radial",
    "check_dyadic",
    "dyadics_up_to",
    "le_multiplier",
    "shell_multiplier",
    "cube_multiplier",
    "tilde_delta_multiplier",
    "nm_multiplier",
    "project_le_N",
    "project_N",
    "project_cube",
    "project_tilde_delta",
    "project_NM",
    "propagate",
    "propagate_array",
    "grad1",
    "spectral_gradient",
    "random_band_limited",
]


def _g(s):
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def eta1(y):
    """Smooth even cutoff: 1 on |y| <= 1, 0 on |y| >= 2.

    The transition is theta(|y| - 1) with theta(s) = g(1-s) / (g(s) + g(1-s))
    and g(s) = exp(-1/s) for s > 0, which is C-infinity and equals 1/2 at
    |y| = 3/2.
    """
    y = np.asarray(y, dtype=float)
    s = np.abs(y) - 1.0
    s = np.clip(s, 0.0, 1.0)
    a, b = _g(np.atleast_1d(1.0 - s)), _g(np.atleast_1d(s))
    out = (a / (a + b)).reshape(s.shape)
    return out if out.ndim else float(out)


def eta4(*xi):
    """Tensor bump prod_j eta1(xi_j)^2 (arguments broadcast)."""
    out = 1.0
    for x in xi:
        out = out * eta1(x) ** 2
    return out


def eta_radial(r):
    """Radial cutoff eta(x) = eta1(|x|) on R^4, given |x|."""
    return eta1(r)


def check_dyadic(spec: GridSpec, N, limit: float | None = None) -> int:
    """Validate that N is a power of two not exceeding ``limit`` (default Nyquist)."""
    if isinstance(N, float) and N.is_integer():
        N = int(N)
    if not isinstance(N, (int, np.integer)) or N < 1 or (N & (N - 1)):
        raise GridError(f"dyadic N must be a power of two >= 1, got {N!r}")
    lim = spec.nyquist if limit is None else limit
    if N > lim:
        raise GridError(f"N={N} exceeds the resolvable limit {lim:g} of {spec}")
    return int(N)


def _axis_factors(spec: GridSpec, scale: float):
    """eta1(xi_j/scale)^2 per axis, shaped for broadcasting."""
    a = eta1(spec.xi1() / scale) ** 2
    b = eta1(spec.xip() / scale) ** 2
    return a[:, None, None, None], b[None, :, None, None], b[None, None, :, None], b[None, None, None, :]


@lru_cache(maxsize=16)
def _le_cached(spec: GridSpec, N: float) -> np.ndarray:
    a, b, c, d = _axis_factors(spec, N)
    out = a * b * c * d
    out.setflags(write=False)
    return out


@lru_cache(maxsize=16)
def _shell_cached(spec: GridSpec, N: float) -> np.ndarray:
    out = _le_cached(spec, N) if N == 1 else _le_cached(spec, N) - _le_cached(spec, N / 2)
    out.setflags(write=False)
    return out


def le_multiplier(spec: GridSpec, N) -> np.ndarray:
    """Multiplier eta4(xi / N) of P_{<=N} (cached, read-only)."""
    return _le_cached(spec, float(N))


def shell_multiplier(spec: GridSpec, N) -> np.ndarray:
    """Multiplier of P_N: eta4(xi/N) - eta4(2 xi/N), and eta4(xi) for N = 1 (cached, read-only)."""
    return _shell_cached(spec, float(N))


def cube_multiplier(spec: GridSpec, z) -> np.ndarray:
    """Indicator of the cube z + [-1/2, 1/2)^4."""
    z = [float(v) for v in z]
    if len(z) != 4:
        raise GridError("cube center must have 4 components")
    masks = []
    for axis, (xi, c) in enumerate(zip(spec.axes_xi(), z)):
        m = (xi >= c - 0.5) & (xi < c + 0.5)
        masks.append(spec.broadcast(axis, m))
    return masks[0] & masks[1] & masks[2] & masks[3]


def dyadics_up_to(spec: GridSpec):
    out, N = [], 1
    while N <= spec.nyquist:
        out.append(N)
        N *= 2
    return out


def tilde_delta_multiplier(spec: GridSpec, delta: float) -> np.ndarray:
    """sum_N p_N(xi) * (1 - eta1)(xi_1 / (delta N))."""
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    xi1 = spec.xi1()[:, None, None, None]
    out = np.zeros(spec.shape)
    for N in dyadics_up_to(spec):
        out += shell_multiplier(spec, N) * (1.0 - eta1(xi1 / (delta * N)))
    return out


def nm_multiplier(spec: GridSpec, N, M) -> np.ndarray:
    """Multiplier p_{N,M}: the P_N shell times an xi_1 band at scale M.

    For M >= 2 the band is eta1(xi_1/(2M)) - eta1(xi_1/M); for M = 1 it is
    eta1(xi_1/2). Summing over 1 <= M <= N telescopes to eta1(xi_1/(2N)),
    which is 1 on the support of the N-shell.
    """
    if M > N:
        raise ValueError(f"M={M} must not exceed N={N}")
    if M < 1 or (int(M) & (int(M) - 1)):
        raise ValueError(f"M must be a dyadic integer >= 1, got {M}")
    xi1 = spec.xi1()
    band = eta1(xi1 / (2 * M))
    if M > 1:
        band = band - eta1(xi1 / M)
    return shell_multiplier(spec, N) * band[:, None, None, None]


def project_le_N(s: Spectrum, N) -> Spectrum:
    N = check_dyadic(s.spec, N)
    return s.with_coeffs(s.coeffs * le_multiplier(s.spec, N))


def project_N(s: Spectrum, N) -> Spectrum:
    N = check_dyadic(s.spec, N)
    return s.with_coeffs(s.coeffs * shell_multiplier(s.spec, N))


def project_cube(s: Spectrum, z) -> Spectrum:
    return s.with_coeffs(np.where(cube_multiplier(s.spec, z), s.coeffs, 0))


def project_tilde_delta(s: Spectrum, delta: float) -> Spectrum:
    return s.with_coeffs(s.coeffs * tilde_delta_multiplier(s.spec, delta))


def project_NM(s: Spectrum, N, M) -> Spectrum:
    N = check_dyadic(s.spec, N)
    return s.with_coeffs(s.coeffs * nm_multiplier(s.spec, N, M))


def propagate_array(coeffs: np.ndarray, spec: GridSpec, t: float) -> np.ndarray:
    return coeffs * np.exp(-1j * t * spec.xi_sq())


def propagate(f: Field, t: float) -> Field:
    """Free Schrodinger flow exp(it Delta) f, i.e. multiplier exp(-it|xi|^2)."""
    if t == 0:
        return f
    c = fftn(f.values)
    return f.with_values(ifftn(propagate_array(c, f.spec, t)))


def spectral_gradient(f: Field) -> list[np.ndarray]:
    """Spectral partial derivatives d_j f, j = 1..4."""
    c = fftn(f.values)
    out = []
    for axis, xi in enumerate(f.spec.axes_xi()):
        k = xi.copy()
        n = xi.size
        k[n // 2] = 0.0  # odd derivative of the Nyquist mode
        out.append(ifftn(c * 1j * f.spec.broadcast(axis, k)))
    return out


def grad1(f: Field) -> np.ndarray:
    """Pointwise |f| + sum_j |d_j f|."""
    out = np.abs(f.values).copy()
    for d in spectral_gradient(f):
        out += np.abs(d)
    return out


def random_band_limited(spec: GridSpec, N, rng: np.random.Generator, shell: bool = False) -> np.ndarray:
    """Complex Gaussian coefficients filtered by P_{<=N} (or P_N), as a field array."""
    c = rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape)
    m = shell_multiplier(spec, N) if shell else le_multiplier(spec, N)
    return ifftn(c * m)
