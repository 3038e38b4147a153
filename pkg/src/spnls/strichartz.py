"""Empirical scans of the linear estimates for exp(it Delta) on R x T^3.

Each scan returns a :class:`ScalingReport` that holds the full grid of
measured constants, the per-N maxima and a least-squares log-log fit.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .euclid import rescale_TN
from .grid import EuclidField, Field, GridSpec, fftn, ifftn
from .norms import (CoarseSamplingWarning, Trajectory, l2_norm, shell_l4_table, trapezoid_weights, z_norm,
                    zprime_norm)
from .spectral import check_dyadic, dyadics_up_to, eta1, shell_multiplier, tilde_delta_multiplier

__all__ = [
    "P1",
    "ThresholdWarning",
    "ScalingReport",
    "scan_grid",
    "loglog_fit",
    "spacetime_lp",
    "point_sources",
    "strichartz_draw",
    "strichartz_scan",
    "dispersive_scan",
    "local_smoothing_check",
    "local_smoothing_sampled",
    "bilinear_scan",
    "ExtinctionReport",
    "extinction_check",
    "write_report_csv",
]

P1 = 18 / 5


class ThresholdWarning(UserWarning):
    """Exponent at or below the admissible threshold."""


@dataclass
class ScalingReport:
    name: str
    p: float | None
    Ns: list
    constants: np.ndarray
    max_constants: np.ndarray
    slope: float
    intercept: float
    residual: float
    ensemble_size: int
    grids: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def rows(self):
        """(p, N, draw, constant) rows."""
        p = "" if self.p is None else self.p
        for i, N in enumerate(self.Ns):
            for j, c in enumerate(np.atleast_1d(self.constants[i])):
                yield p, N, j, float(c)


def write_report_csv(report: ScalingReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["p", "N", "draw", "constant"])
        for p, N, j, c in report.rows():
            w.writerow([p, N, j, repr(c)])
        w.writerow(["summary", "slope", "intercept", "residual", "max_constant"])
        w.writerow(["", repr(report.slope), repr(report.intercept), repr(report.residual),
                    repr(float(np.max(report.max_constants)))])


def scan_grid(N: int, L1: int = 1) -> GridSpec:
    """Smallest grid holding the P_N shell without aliasing: 4N points per unit period."""
    return GridSpec(L1, 4 * N * L1, 4 * N)


def loglog_fit(x, y) -> tuple[float, float, float]:
    """Least-squares fit log y = a log x + b; returns (a, b, rms residual)."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    if lx.size < 2:
        return float("nan"), float(ly[0]) if ly.size else float("nan"), 0.0
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = ly - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(res**2)))


def _time_grid(n_t: int, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    return np.linspace(lo, hi, n_t)


def _abs_pow_sum(u: np.ndarray, p: float) -> float:
    a2 = u.real**2 + u.imag**2
    if p == 2:
        return float(a2.sum())
    if p == 4:
        a2 *= a2
        return float(a2.sum())
    return float(np.sum(a2 ** (p / 2)))


def spacetime_lp(coeffs: np.ndarray, spec: GridSpec, p: float, times: np.ndarray,
                 dtype=np.complex128, anchor: int = 16) -> float:
    """||exp(it Delta) f||_{L^p(R x T^3 x [t_0, t_-1])} from raw fftn coefficients of f.

    Uniform time grids advance the phase by a fixed multiplier in precision
    ``dtype`` instead of recomputing exp(-it|xi|^2) at every sample; the
    exact phase is restored every ``anchor`` samples to bound rounding drift.
    """
    times = np.asarray(times, float)
    w = trapezoid_weights(times)
    xi2 = spec.xi_sq()
    d = np.diff(times)
    uniform = np.allclose(d, d[0], rtol=1e-12, atol=0)
    step = np.exp(-1j * d[0] * xi2).astype(dtype) if uniform else None
    # the exact phase is only needed on the support of the data
    nz = np.flatnonzero(coeffs)
    c_nz, xi2_nz = coeffs.ravel()[nz], xi2.ravel()[nz]
    acc = 0.0
    c = None
    for k, (t, wt) in enumerate(zip(times, w)):
        if c is None or not uniform or k % anchor == 0:
            c = np.zeros(spec.shape, dtype)
            c.ravel()[nz] = c_nz * np.exp(-1j * t * xi2_nz)
        else:
            c *= step
        acc += wt * spec.cell_volume * _abs_pow_sum(ifftn(c), p)
    return float(acc ** (1.0 / p))


def point_sources(spec: GridSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    """Raw fftn coefficients of sum_i w_i delta_{x_i} at random grid sites."""
    c = np.zeros(spec.shape, dtype=complex)
    xi = spec.axes_xi()
    for _ in range(count):
        idx = [rng.integers(0, n) for n in spec.shape]
        w = rng.standard_normal() + 1j * rng.standard_normal()
        ph = w
        for a in range(4):
            x = idx[a] * (spec.dx1 if a == 0 else spec.dxp)
            ph = ph * spec.broadcast(a, np.exp(-1j * xi[a] * x))
        c += ph
    return c


def strichartz_draw(spec: GridSpec, N: int, rng: np.random.Generator, kind: str) -> np.ndarray:
    """Shell-N data with unit L^2 norm, as raw fftn coefficients."""
    if kind == "gaussian":
        c = rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape)
    elif kind == "concentrated":
        c = point_sources(spec, rng, int(rng.integers(1, 4)))
    else:
        raise ValueError(f"unknown draw kind {kind!r}")
    c = c * shell_multiplier(spec, N)
    nrm = math.sqrt(spec.cell_volume / spec.size * np.sum(np.abs(c) ** 2))
    return c / nrm


def strichartz_scan(p: float = 19 / 5, Ns=(2, 4, 8), ensemble_size: int = 64, seed: int = 0,
                    n_t: int = 128, L1: int = 1, mix: str = "mixed") -> ScalingReport:
    """Measure ||exp(it Delta) P_N f||_{L^p} / N^{2-6/p} over an ensemble.

    ``mix`` selects the draws: "gaussian", "concentrated" or "mixed"
    (alternating). ``slope`` is fitted to the per-N maxima of the raw norm
    and so estimates the exponent 2 - 6/p; ``max_constants`` hold the
    normalized ratios.
    """
    flags = []
    if p <= P1:
        warnings.warn(f"p={p} <= 18/5: uniform bounds are not expected", ThresholdWarning, stacklevel=2)
        flags.append("p<=18/5")
    elif p < P1 + 0.2:
        flags.append("near-threshold")
    rng = np.random.default_rng(seed)
    times = _time_grid(n_t)
    e = 2 - 6 / p
    consts = np.zeros((len(Ns), ensemble_size))
    raw = np.zeros_like(consts)
    grids = []
    kinds = {"gaussian": ["gaussian"], "concentrated": ["concentrated"],
             "mixed": ["gaussian", "concentrated"]}[mix]
    for i, N in enumerate(Ns):
        spec = scan_grid(N, L1)
        check_dyadic(spec, N, spec.nyquist / 2)
        grids.append(spec)
        for j in range(ensemble_size):
            c = strichartz_draw(spec, N, rng, kinds[j % len(kinds)])
            raw[i, j] = spacetime_lp(c, spec, p, times, np.complex64)
            consts[i, j] = raw[i, j] / N**e
    mx = consts.max(axis=1)
    slope, icpt, res = loglog_fit(Ns, raw.max(axis=1))
    return ScalingReport("strichartz", p, list(Ns), consts, mx, slope, icpt, res, ensemble_size, grids, flags,
                         {"predicted_exponent": e, "raw_max": raw.max(axis=1), "n_t": n_t})


# ---------------------------------------------------------------------------
# dispersive bound


def _axis_kernel(xi: np.ndarray, scale: float, t: float, n: int) -> np.ndarray:
    """sum_xi eta1(xi/scale)^2 exp(-it xi^2 + i x xi) at the grid x = j P / n, j <= n/2."""
    m = eta1(xi / scale) ** 2 * np.exp(-1j * t * xi**2)
    return (np.fft.ifft(m) * n)[: n // 2 + 1]


def _delta_sup(spec: GridSpec, N: int, t: float) -> float:
    """sup_x |exp(it Delta) P_N delta_0| with delta_0 of unit mass, via separability."""
    xs = [spec.xi1(), spec.xip(), spec.xip(), spec.xip()]

    def prod(scale):
        ks = [_axis_kernel(x, scale, t, x.size) for x in xs]
        return (ks[0][:, None, None, None] * ks[1][None, :, None, None] * ks[2][None, None, :, None]
                * ks[3][None, None, None, :])

    K = prod(N) if N == 1 else prod(N) - prod(N / 2)
    return float(np.abs(K).max() / ((2 * math.pi) ** 4 * spec.L1))


def dispersive_scan(Ns=(4, 8), t_range=(0.01, 1.0), n_t: int = 64, L1: int = 16, family: str = "delta",
                    seed: int = 0, draws: int = 4) -> ScalingReport:
    """sup_t ||exp(it Delta) P_N f||_inf |t|^{1/2} / (N^3 ||f||_1).

    ``family="delta"`` uses a single grid-site delta (the extremal L^1 datum)
    and a separable evaluation; ``family="random-signs"`` uses a few sites
    with random signs through full FFTs.
    """
    lo, hi = t_range
    if not 0 < lo < hi:
        raise ValueError("t_range must satisfy 0 < t_lo < t_hi")
    ts = np.geomspace(lo, hi, n_t)
    rng = np.random.default_rng(seed)
    nd = 1 if family == "delta" else draws
    consts = np.zeros((len(Ns), nd))
    per_t = np.zeros((len(Ns), n_t))
    grids = []
    for i, N in enumerate(Ns):
        spec = scan_grid(N, L1)
        check_dyadic(spec, N, spec.nyquist / 2)
        grids.append(spec)
        if family == "delta":
            vals = np.array([_delta_sup(spec, N, t) for t in ts])
            per_t[i] = vals * np.sqrt(ts) / N**3
            consts[i, 0] = per_t[i].max()
        elif family == "random-signs":
            m = shell_multiplier(spec, N)
            xi2 = spec.xi_sq()
            for j in range(nd):
                k = int(rng.integers(2, 6))
                signs = rng.choice([-1.0, 1.0], size=k)
                f = np.zeros(spec.shape)
                for s in signs:
                    f[tuple(rng.integers(0, n) for n in spec.shape)] += s
                l1 = spec.cell_volume * np.abs(f).sum()
                c = fftn(f) * m
                best = 0.0
                for t in ts:
                    u = ifftn(c * np.exp(-1j * t * xi2))
                    best = max(best, np.abs(u).max() * math.sqrt(t) / (N**3 * l1))
                consts[i, j] = best
        else:
            raise ValueError(f"unknown family {family!r}")
    mx = consts.max(axis=1)
    slope, icpt, res = loglog_fit(Ns, mx)
    return ScalingReport("dispersive", None, list(Ns), consts, mx, slope, icpt, res, nd, grids, [],
                         {"times": ts, "per_t": per_t, "family": family})


# ---------------------------------------------------------------------------
# local smoothing


def _smoothing_lhs(c: np.ndarray, spec: GridSpec, t_lo: float = -1.0, t_hi: float = 1.0) -> np.ndarray:
    """x1 -> int_{t_lo}^{t_hi} int_{T^3} |exp(it Delta) g|^2 dx' dt, with the time integral exact.

    ``c`` are the raw fftn coefficients of g. Only the xi_1 phase survives
    the x' integral, so the result is a Hermitian form in xi_1 whose time
    integral is a sinc kernel.
    """
    n1 = spec.n1
    A = c.reshape(n1, -1)
    G = A @ A.conj().T
    xi = spec.xi1()
    d = xi[:, None] ** 2 - xi[None, :] ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        S = np.where(d == 0, t_hi - t_lo, (np.exp(-1j * d * t_hi) - np.exp(-1j * d * t_lo)) / (-1j * d))
    B = G * S
    E = np.exp(1j * np.outer(spec.x1(), xi))
    vals = np.einsum("xi,ij,xj->x", E, B, E.conj()).real
    # g = ifftn(c); the x' integral of |g|^2 equals (2 pi)^3 sum_xi' |.|^2 with 1/n normalization
    return vals * (2 * math.pi) ** 3 / (spec.n1**2 * spec.nper**6)


def local_smoothing_sampled(phi: Field, delta: float, K: int, n_t: int = 256) -> float:
    """Same quantity as :func:`local_smoothing_check` with a time grid, for cross-checks."""
    spec = phi.spec
    c = fftn(phi.values) * tilde_delta_multiplier(spec, delta) * shell_multiplier(spec, K)
    ts = _time_grid(n_t)
    w = trapezoid_weights(ts)
    prof = np.zeros(spec.n1)
    for t, wt in zip(ts, w):
        u = ifftn(c * np.exp(-1j * t * spec.xi_sq()))
        prof += wt * spec.dxp**3 * np.sum(np.abs(u) ** 2, axis=(1, 2, 3))
    return float(math.sqrt(prof.max()) / ((delta * K) ** -0.5 * l2_norm(phi)))


def local_smoothing_check(phi: Field, delta: float, K: int) -> float:
    """sup_x1 ||P_K exp(it Delta) Ptilde_delta phi||_{L^2(T^3 x [-1,1])} / [(delta K)^{-1/2} ||phi||_2]."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    spec = phi.spec
    check_dyadic(spec, K)
    nrm = l2_norm(phi)
    if nrm == 0:
        raise ValueError("local smoothing ratio is undefined for the zero field")
    mult = shell_multiplier(spec, K)
    if delta < 1:
        mult = mult * tilde_delta_multiplier(spec, delta)
    else:
        xi1 = spec.xi1()[:, None, None, None]
        mult = mult * sum(shell_multiplier(spec, N) * (1 - eta1(xi1 / N)) for N in dyadics_up_to(spec))
    prof = _smoothing_lhs(fftn(phi.values) * mult, spec)
    return float(math.sqrt(max(prof.max(), 0.0)) / ((delta * K) ** -0.5 * nrm))


# ---------------------------------------------------------------------------
# bilinear estimate


def bilinear_scan(pairs, ensemble: int = 4, seed: int = 0, n_t: int = 64, L1: int = 1) -> ScalingReport:
    """||u1 u2||_{L^2(x, t in [0,1])} / (||f1||_2 ||u2||_{Z'}) for free waves of shell data.

    ``pairs`` lists (N1, N2) with N1 >= N2. ``slope`` is the empirical kappa
    from regressing the worst ratio on N2/N1 + 1/N2.
    """
    rng = np.random.default_rng(seed)
    ts = _time_grid(n_t, 0.0, 1.0)
    w = trapezoid_weights(ts)
    consts = np.zeros((len(pairs), ensemble))
    prod_norms = np.zeros_like(consts)
    grids = []
    for i, (N1, N2) in enumerate(pairs):
        if N1 < N2:
            raise ValueError(f"need N1 >= N2, got ({N1}, {N2})")
        spec = scan_grid(N1, L1)
        check_dyadic(spec, N1, spec.nyquist / 2)
        grids.append(spec)
        xi2 = spec.xi_sq()
        for j in range(ensemble):
            c1 = strichartz_draw(spec, N1, rng, "gaussian")
            c2 = strichartz_draw(spec, N2, rng, "gaussian")
            U2 = np.empty((n_t,) + spec.shape, dtype=complex)
            acc = 0.0
            for k, t in enumerate(ts):
                ph = np.exp(-1j * t * xi2)
                u1 = ifftn(c1 * ph)
                U2[k] = ifftn(c2 * ph)
                acc += w[k] * spec.cell_volume * np.sum(np.abs(u1 * U2[k]) ** 2)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", CoarseSamplingWarning)
                zp = zprime_norm(Trajectory(spec, ts, U2))
            prod_norms[i, j] = math.sqrt(acc)
            consts[i, j] = prod_norms[i, j] / (1.0 * zp)  # ||f1||_2 = 1
    mx = consts.max(axis=1)
    gain = np.array([N2 / N1 + 1 / N2 for N1, N2 in pairs])
    if np.unique(gain).size >= 2:
        slope, icpt, res = loglog_fit(gain, mx)
    else:
        slope, icpt, res = float("nan"), float(np.log(mx[0])), 0.0
    return ScalingReport("bilinear", None, [tuple(pq) for pq in pairs], consts, mx, slope, icpt, res, ensemble,
                         grids, [], {"gain": gain, "product_norms": prod_norms})


# ---------------------------------------------------------------------------
# extinction


@dataclass
class ExtinctionReport:
    N: float
    T1s: list
    z_values: np.ndarray
    shell_profiles: list
    reports: list = field(default_factory=list)

    @property
    def decreasing(self) -> bool:
        return bool(np.all(np.diff(self.z_values) <= 1e-14 * max(1.0, self.z_values.max())))


def extinction_check(psi: EuclidField, N: float, T1s=(1, 4, 16), spec: GridSpec | None = None,
                     per_octave: int = 8) -> ExtinctionReport:
    """Z-norm of exp(it Delta) T_N psi on [-1, 1] minus (-T1 N^{-2}, T1 N^{-2}).

    Times are sampled geometrically from min(T1) N^{-2} to 1 on both sides;
    the region for each T1 is the corresponding subset of samples.
    """
    spec = spec or scan_grid(int(2 ** math.ceil(math.log2(max(N, 1)))), 1)
    check_dyadic(spec, int(N), spec.nyquist / 2)
    f = rescale_TN(psi, spec, N)
    c = fftn(f.values)
    t_min = min(T1s) / N**2
    T1s = list(T1s)
    zs = np.zeros(len(T1s))
    profiles, reports = [], []
    if t_min >= 1:
        return ExtinctionReport(N, T1s, zs, [{} for _ in T1s], [])
    n = max(2, int(math.ceil(per_octave * math.log2(1 / t_min))) + 1)
    pos = np.geomspace(t_min, 1.0, n)
    xi2 = spec.xi_sq()
    Ns = dyadics_up_to(spec)
    sides = {}
    for sign in (1, -1):
        data = np.stack([ifftn(c * np.exp(-1j * sign * t * xi2)) for t in pos])
        times = sign * pos
        if sign < 0:
            data, times = data[::-1], times[::-1]
        traj = Trajectory(spec, times, data)
        sides[sign] = (traj, shell_l4_table(traj, Ns)[1])
    for k, T1 in enumerate(T1s):
        edge = T1 / N**2
        best, best_rep = 0.0, None
        if edge < 1:
            for sign, (traj, table) in sides.items():
                m = np.abs(traj.times) >= edge * (1 - 1e-12)
                if m.sum() < 2:
                    continue
                sub = Trajectory(spec, traj.times[m], traj.data[m])
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", CoarseSamplingWarning)
                    rep = z_norm(sub, Ns=Ns, table=table[m])
                if best_rep is None or rep.value > best:
                    best, best_rep = rep.value, rep
        zs[k] = best
        profiles.append(dict(best_rep.breakdown) if best_rep else {})
        reports.append(best_rep)
    return ExtinctionReport(N, T1s, zs, profiles, reports)
