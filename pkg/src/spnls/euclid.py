"""Transfer between the R^4 box and a neighborhood of the origin in R x T^3.

The chart is the identity on centered coordinates. A function on R^4 whose
support is compressed into a small ball around 0 is copied onto the torus
grid by trigonometric interpolation of its box samples, and conversely.
"""
from __future__ import annotations

import math
import warnings

import numpy as np

from .grid import EuclidField, Field, GridError, GridSpec, fftn, sample_trig
from .spectral import eta1

__all__ = [
    "ChartWarning",
    "ResolutionError",
    "q_window",
    "transfer_to_torus",
    "rescale_TN",
    "windowed_rescale",
    "pullback",
    "tail_fraction",
    "euclid_tail_fraction",
]


class ChartWarning(UserWarning):
    """The transferred support leaves the unit ball of the chart."""


class ResolutionError(RuntimeError):
    """Data carries too much energy near the grid cutoff."""


def q_window(phi: EuclidField, N: float) -> EuclidField:
    """Q_N phi(y) = eta(y / N^{1/2}) phi(y)."""
    return phi.with_values(phi.values * eta1(phi.radius() / math.sqrt(N)))


def _check_chart(spec: GridSpec, radius: float):
    lim = min(math.pi, math.pi * spec.L1)
    if radius > lim:
        raise GridError(f"support radius {radius:.3g} exceeds the fundamental domain (pi)")
    if radius >= 1:
        warnings.warn(f"support radius {radius:.3g} leaves the unit chart", ChartWarning, stacklevel=3)


def transfer_to_torus(values: np.ndarray, side: float, spec: GridSpec, N: float, radius: float,
                      x0=None) -> np.ndarray:
    """Array x -> N eta1(N|x - x0| / radius) v(N (x - x0)) on the torus grid.

    ``values`` are samples on the box ``[-pi side, pi side)^4`` in index
    order with the origin at index 0.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    supp = 2.0 * radius / N
    _check_chart(spec, supp)
    if 2.0 * radius > math.pi * side * (1 + 1e-12):
        raise GridError(f"window radius {2 * radius:g} exceeds the box half-width {math.pi * side:g}")
    out = np.zeros(spec.shape, dtype=complex)
    if not np.any(values):
        return out
    shift = [0.0] * 4 if x0 is None else [float(v) for v in x0]
    idx, pts = [], []
    for c, P, s in zip(spec.centered_axes(), spec.periods(), shift):
        d = (c - s + P / 2) % P - P / 2
        keep = np.nonzero(np.abs(d) < supp)[0]
        idx.append(keep)
        pts.append(d[keep])
    if any(k.size == 0 for k in idx):
        return out
    block = sample_trig(values, [2 * math.pi * side] * 4, [N * p for p in pts])
    r2 = sum(np.reshape(p**2, [-1 if a == b else 1 for b in range(4)]) for a, p in enumerate(pts))
    block = N * eta1(N * np.sqrt(r2) / radius) * block
    out[np.ix_(*idx)] = block
    return out


def rescale_TN(phi: EuclidField, spec: GridSpec, N: float, x0=None) -> Field:
    """T_N phi(x) = N eta(N^{1/2} x) phi(N x), placed at ``x0`` (default 0)."""
    return Field(spec, transfer_to_torus(phi.values, phi.side, spec, N, math.sqrt(N), x0))


def windowed_rescale(v: EuclidField, spec: GridSpec, N: float, R: float, x0=None) -> Field:
    """V_{R,N}(y) = N eta(N y / R) v(N y)."""
    return Field(spec, transfer_to_torus(v.values, v.side, spec, N, R, x0))


def pullback(g: Field, N: float, side: float, n4: int, x0=None) -> EuclidField:
    """psi(y) = N^{-1} g(x0 + y / N) sampled on the box of the given side."""
    shift = [0.0] * 4 if x0 is None else [float(v) for v in x0]
    h = 2 * math.pi * side / n4
    y = (np.arange(n4) * h + math.pi * side) % (2 * math.pi * side) - math.pi * side
    pts = [(s + y / N) for s in shift]
    vals = sample_trig(g.values, g.spec.periods(), pts) / N
    return EuclidField(side, n4, vals)


def _tail_mask(axes_k, fraction):
    masks = []
    for axis, k in enumerate(axes_k):
        kmax = np.abs(k).max()
        m = np.abs(k) > fraction * kmax
        masks.append(np.reshape(m, [-1 if a == axis else 1 for a in range(4)]))
    return masks[0] | masks[1] | masks[2] | masks[3]


def tail_fraction(f: Field, fraction: float = 0.5) -> float:
    """Share of the H^1 energy carried by modes with some |xi_j| above
    ``fraction`` of that axis' Nyquist frequency."""
    c = np.abs(fftn(f.values)) ** 2 * (1.0 + f.spec.xi_sq())
    tot = c.sum()
    if tot == 0:
        return 0.0
    return float(c[_tail_mask(f.spec.axes_xi(), fraction)].sum() / tot)


def euclid_tail_fraction(f: EuclidField, fraction: float = 0.5) -> float:
    """As :func:`tail_fraction` for box data."""
    c = np.abs(fftn(f.values)) ** 2 * (1.0 + f.k_sq())
    tot = c.sum()
    if tot == 0:
        return 0.0
    k = f.freqs()
    return float(c[_tail_mask([k] * 4, fraction)].sum() / tot)
