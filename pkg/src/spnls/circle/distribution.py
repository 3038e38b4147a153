"""Superlevel-set measure of band-limited free waves on short time intervals."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..grid import GridSpec, ifftn, pruned_ifftn, support_indices
from ..norms import trapezoid_weights
from .decomposition import lambda_window

__all__ = ["DistributionReport", "admissible_symbol", "free_wave", "superlevel_measure", "distributional_check"]

T_HALF = 2.0**-10


def admissible_symbol(spec: GridSpec, N: int, rng: np.random.Generator) -> np.ndarray:
    """Random m with ||m||_{L^2} = 1 supported in |xi| <= N, concentrated at a random (x0, t0).

    m = a(xi) exp(-i x0.xi + i t0 |xi|^2) with positive random amplitudes a.
    """
    xi_sq = spec.xi_sq()
    mask = xi_sq <= N * N
    nz = np.nonzero(mask)
    a = rng.uniform(0.5, 1.5, nz[0].size)
    x0 = [rng.uniform(0, P) for P in spec.periods()]
    t0 = rng.uniform(-T_HALF, T_HALF)
    ph = sum(ax[i] * x for ax, i, x in zip(spec.axes_xi(), nz, x0))
    m = np.zeros(spec.shape, dtype=complex)
    m[nz] = a * np.exp(-1j * ph + 1j * t0 * xi_sq[nz])
    # the xi_1 integral is a sum weighted by 1/L1
    return m / math.sqrt(np.sum(np.abs(m) ** 2) / spec.L1)


def free_wave(m: np.ndarray, spec: GridSpec, t: float, dtype=np.complex128) -> np.ndarray:
    """F(x, t) = int m(xi) e^{-i t |xi|^2 + i x.xi} dxi on the grid."""
    c = (m * np.exp(-1j * t * spec.xi_sq()) * (spec.size / spec.L1)).astype(dtype)
    return ifftn(c)


def _neighbour_extrema(a: np.ndarray):
    lo, hi = a.copy(), a.copy()
    for ax in range(a.ndim):
        for sh in (1, -1):
            r = np.roll(a, sh, axis=ax)
            np.minimum(lo, r, out=lo)
            np.maximum(hi, r, out=hi)
    return lo, hi


def superlevel_measure(spec: GridSpec, fields, times, lambdas):
    """(measure, band) of {|F| >= lam} over grid x [times] by cell counting.

    The band is half the measure of cells whose axis neighbours straddle lam.
    """
    wt = trapezoid_weights(np.asarray(times, float))
    dV = spec.cell_volume
    meas = np.zeros(len(lambdas))
    band = np.zeros(len(lambdas))
    for w, F in zip(wt, fields):
        a = np.abs(F).astype(np.float32, copy=False)
        lo, hi = _neighbour_extrema(a)
        for i, lam in enumerate(lambdas):
            meas[i] += w * dV * np.count_nonzero(a >= lam)
            band[i] += 0.5 * w * dV * (np.count_nonzero(hi >= lam) - np.count_nonzero(lo >= lam))
    return meas, band


@dataclass
class DistributionReport:
    N: int
    p0: float
    lambdas: np.ndarray
    measures: np.ndarray = field(repr=False)
    bands: np.ndarray = field(repr=False)
    constants: np.ndarray = field(repr=False)
    field_max: np.ndarray = field(repr=False)
    max_constant: float
    monotone: bool

    def rows(self):
        out = []
        for d in range(self.measures.shape[0]):
            for i, lam in enumerate(self.lambdas):
                out.append((self.N, d, float(lam), float(self.measures[d, i]), float(self.bands[d, i]),
                            float(self.constants[d, i])))
        return out


def distributional_check(N: int, lambdas=None, p0: float = 3.7, draws: int = 32, seed: int = 0,
                         n_lambda: int = 8, n_t: int = 8, L1: int = 1, oversample: int = 2) -> DistributionReport:
    """Implied constants C = |S_lam| / (N^{2p0-6} lam^{-p0}) for random admissible symbols.

    The default lambda grid runs geometrically from the lower window end to
    the a-priori bound sup|F| <= ||m||_1 <= |ball|^{1/2}. The grid has
    2N * oversample points per period; fields are computed in single
    precision, which is ample for threshold counting.
    """
    spec = GridSpec(L1, 2 * N * L1 * oversample, 2 * N * oversample)
    lo, hi = lambda_window(N, p0)
    if lambdas is None:
        vol = np.count_nonzero(spec.xi_sq() <= N * N) / L1
        lambdas = np.geomspace(lo, min(hi, math.sqrt(vol)), n_lambda)
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(lambdas < lo * (1 - 1e-12)) or np.any(lambdas > hi * (1 + 1e-12)):
        raise ValueError(f"lambda grid must lie in [{lo:g}, {hi:g}]")
    rng = np.random.default_rng(seed)
    times = np.linspace(-T_HALF, T_HALF, n_t)
    meas = np.zeros((draws, lambdas.size))
    band = np.zeros_like(meas)
    fmax = np.zeros(draws)
    for d in range(draws):
        m = admissible_symbol(spec, N, rng)
        idx = support_indices(m)
        block = m[np.ix_(*idx)] * (spec.size / spec.L1)
        xi_sq = spec.xi_sq()[np.ix_(*idx)]
        fields = [pruned_ifftn((block * np.exp(-1j * t * xi_sq)).astype(np.complex64), idx, spec.shape)
                  for t in times]
        fmax[d] = max(np.abs(F).max() for F in fields)
        meas[d], band[d] = superlevel_measure(spec, fields, times, lambdas)
    shape = float(N) ** (2 * p0 - 6) * lambdas ** (-p0)
    consts = meas / shape
    order = np.argsort(lambdas)
    mono = bool(np.all(np.diff(meas[:, order], axis=1) <= 0))
    return DistributionReport(N, p0, lambdas, meas, band, consts, fmax, float(consts.max()), mono)
