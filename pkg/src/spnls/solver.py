"""Time integration of (i d_t + Delta) u = rho u |u|^2 on R x T^3 and on the R^4 box.

The default scheme is Strang splitting. Its nonlinear substep is the exact
pointwise phase rotation ``u -> u exp(-i rho |u|^2 h)``. Its linear substep
is the exact spectral propagator. Both preserve the discrete L^2 norm, and
a single plane wave is reproduced exactly.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .euclid import (ChartWarning, ResolutionError, euclid_tail_fraction, rescale_TN, tail_fraction,
                     windowed_rescale)
from .grid import EuclidField, Field, GridSpec, fftn, ifftn, write_field
from .norms import (CoarseSamplingWarning, Trajectory, _h1_from_coeffs, duhamel_norm, mass_energy,
                    shell_l4_table, z_norm, zprime_norm)

__all__ = [
    "NumericalAbort",
    "SmallnessViolated",
    "ResolutionError",
    "SolveConfig",
    "StabilityReport",
    "ConservationTable",
    "PicardDiagnostics",
    "ComparisonReport",
    "BlowupReport",
    "check_resolution",
    "evolve",
    "evolve_euclid",
    "picard_solve",
    "duhamel_residual",
    "check_conservation",
    "equation_residual",
    "stability_experiment",
    "euclidean_comparison",
    "blowup_monitor",
    "h1_distance",
    "write_trajectory",
]


class NumericalAbort(RuntimeError):
    """A computation produced non-finite values or failed to converge."""

    def __init__(self, message: str, diagnostic: dict | None = None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class SmallnessViolated(NumericalAbort):
    """Picard iteration failed to contract."""


@dataclass(frozen=True)
class SolveConfig:
    dt: float = 1e-3
    scheme: str = "strang"
    tol: float = 1e-10
    max_iter: int = 50
    record_stride: int = 1
    rho: float = 1.0
    resolution_tol: float = 1e-8

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.record_stride < 1:
            raise ValueError(f"record_stride must be >= 1, got {self.record_stride}")
        if self.scheme not in ("strang", "picard"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


def h1_distance(a: np.ndarray, b: np.ndarray, spec: GridSpec) -> float:
    return _h1_from_coeffs(spec, fftn(a - b))


def check_resolution(f: Field, tol: float = 1e-8) -> float:
    frac = tail_fraction(f, 0.5)
    if frac > tol:
        raise ResolutionError(f"{frac:.3e} of the H1 energy sits above half the Nyquist frequency (limit {tol:g})")
    return frac


def _step_count(T: float, dt: float) -> tuple[int, float]:
    n = max(1, int(math.ceil(abs(T) / dt - 1e-9)))
    return n, abs(T) / n


def _strang(u: np.ndarray, phase: np.ndarray, rho: float, h: float, nsteps: int, stride: int, on_record):
    """Advance ``nsteps`` steps of size h, calling on_record(step, u) every stride."""
    u = u.copy()
    half = 0.5 * h * rho
    if rho != 0:
        u *= np.exp(-1j * half * np.abs(u) ** 2)
    for step in range(1, nsteps + 1):
        u = ifftn(fftn(u) * phase)
        rec = step % stride == 0 or step == nsteps
        if rho != 0:
            if rec:
                u *= np.exp(-1j * half * np.abs(u) ** 2)
                if not np.all(np.isfinite(u)):
                    raise NumericalAbort(f"non-finite values at step {step}", {"step": step, "t": step * h})
                on_record(step, u)
                if step < nsteps:
                    u *= np.exp(-1j * half * np.abs(u) ** 2)
            else:
                u *= np.exp(-2j * half * np.abs(u) ** 2)
        elif rec:
            if not np.all(np.isfinite(u)):
                raise NumericalAbort(f"non-finite values at step {step}", {"step": step, "t": step * h})
            on_record(step, u)
    return u


def evolve(u0: Field, T: float, cfg: SolveConfig = SolveConfig(), t0: float = 0.0,
           check: bool = True) -> Trajectory:
    """Strang-split evolution from ``u0`` at time ``t0`` to ``t0 + T``.

    Negative T is handled through the symmetry u(-t) = conj(v(t)), where v
    starts from conj(u0); the returned samples are in increasing time order.
    """
    if check:
        check_resolution(u0, cfg.resolution_tol)
    if not np.all(np.isfinite(u0.values)):
        raise NumericalAbort("non-finite initial data")
    spec = u0.spec
    n, h = _step_count(T, cfg.dt)
    backward = T < 0
    start = np.conj(u0.values) if backward else u0.values
    phase = np.exp(-1j * h * spec.xi_sq())
    steps, data = [0], [start.copy()]

    def rec(step, u):
        steps.append(step)
        data.append(u.copy())

    _strang(start, phase, cfg.rho, h, n, cfg.record_stride, rec)
    times = np.array(steps, float) * h
    arr = np.stack(data)
    if backward:
        times, arr = t0 - times[::-1], np.conj(arr[::-1])
    else:
        times = t0 + times
    return Trajectory(spec, times, arr, h)


def evolve_euclid(phi: EuclidField, T: float, dt: float, rho: float = 1.0, record_stride: int = 1):
    """Same scheme on the periodic R^4 box. Returns (times, stacked values)."""
    n, h = _step_count(T, dt)
    backward = T < 0
    start = np.conj(phi.values) if backward else phi.values
    phase = np.exp(-1j * h * phi.k_sq())
    steps, data = [0], [start.copy()]

    def rec(step, u):
        steps.append(step)
        data.append(u.copy())

    _strang(start, phase, rho, h, n, record_stride, rec)
    times = np.array(steps, float) * h
    arr = np.stack(data)
    if backward:
        times, arr = -times[::-1], np.conj(arr[::-1])
    return times, arr


# ---------------------------------------------------------------------------
# Picard iteration


@dataclass
class PicardDiagnostics:
    iterations: int
    differences: list
    ratios: list
    converged: bool
    linear_zprime: float
    residual: float


def _duhamel_map(c0: np.ndarray, V: np.ndarray, times: np.ndarray, xi2: np.ndarray, rho: float) -> np.ndarray:
    """Phi(v)(t) = e^{i(t-a)Delta} u0 - i int_a^t e^{i(t-s)Delta} rho v|v|^2 ds, in Fourier space."""
    a = times[0]
    out = np.empty_like(V)
    acc = np.zeros_like(c0)
    prev = None
    for i, t in enumerate(times):
        vi = ifftn(V[i])
        cur = np.exp(1j * (t - a) * xi2) * fftn(rho * vi * np.abs(vi) ** 2)
        if prev is not None:
            acc += 0.5 * (t - times[i - 1]) * (prev + cur)
        prev = cur
        out[i] = np.exp(-1j * (t - a) * xi2) * (c0 - 1j * acc)
    return out


def _sup_h1_coeffs(spec, C):
    return max(_h1_from_coeffs(spec, C[i]) for i in range(C.shape[0]))


def picard_solve(u0: Field, I, cfg: SolveConfig = SolveConfig(scheme="picard")):
    """Fixed-point iteration of the Duhamel map on the time grid of step cfg.dt.

    Returns the trajectory and a :class:`PicardDiagnostics`. Raises
    :class:`SmallnessViolated` after three consecutive ratios >= 1.
    """
    a, b = float(I[0]), float(I[1])
    if not b > a:
        raise ValueError("interval must have positive length")
    if b - a > 1 + 1e-12:
        raise ValueError("picard_solve requires |I| <= 1")
    spec = u0.spec
    n, h = _step_count(b - a, cfg.dt)
    times = a + h * np.arange(n + 1)
    xi2 = spec.xi_sq()
    c0 = fftn(u0.values)
    V = np.stack([np.exp(-1j * (t - a) * xi2) * c0 for t in times])
    lin = Trajectory(spec, times, np.stack([ifftn(v) for v in V]), h)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoarseSamplingWarning)
        zp = zprime_norm(lin)
    diffs, ratios = [], []
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        W = _duhamel_map(c0, V, times, xi2, cfg.rho)
        if not np.all(np.isfinite(W)):
            raise NumericalAbort("non-finite Picard iterate", {"iteration": it})
        d = _sup_h1_coeffs(spec, W - V)
        diffs.append(d)
        if len(diffs) >= 2 and diffs[-2] > 0:
            ratios.append(d / diffs[-2])
        V = W
        if d < cfg.tol:
            converged = True
            break
        if len(ratios) >= 3 and all(r >= 1 for r in ratios[-3:]):
            raise SmallnessViolated(
                "smallness condition violated: Picard iteration does not contract",
                {"ratios": ratios, "differences": diffs, "linear_zprime": zp},
            )
    if not converged:
        raise NumericalAbort(f"Picard iteration did not converge in {cfg.max_iter} iterations",
                             {"ratios": ratios, "differences": diffs})
    traj = Trajectory(spec, times, np.stack([ifftn(v) for v in V]), h)
    res = duhamel_residual(traj, u0, cfg.rho)
    return traj, PicardDiagnostics(it, diffs, ratios, converged, zp, res)


def duhamel_residual(u: Trajectory, u0: Field, rho: float = 1.0) -> float:
    """sup_t H^1 distance between u and the trapezoid Duhamel map applied to u."""
    spec = u.spec
    xi2 = spec.xi_sq()
    V = np.stack([fftn(u.data[i]) for i in range(len(u))])
    W = _duhamel_map(fftn(u0.values), V, u.times, xi2, rho)
    return _sup_h1_coeffs(spec, W - V)


# ---------------------------------------------------------------------------
# diagnostics and experiments


@dataclass
class ConservationTable:
    times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray

    @property
    def mass_drift(self) -> float:
        return float(np.max(np.abs(self.mass - self.mass[0])) / max(abs(self.mass[0]), 1e-300))

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])) / max(abs(self.energy[0]), 1e-300))

    def rows(self):
        for i, (t, M, E) in enumerate(zip(self.times, self.mass, self.energy)):
            yield i, float(t), float(M), float(E)


def check_conservation(u: Trajectory, rho: float = 1.0) -> ConservationTable:
    M, E = [], []
    for i in range(len(u)):
        m, e = mass_energy(u.field(i))
        if rho != 1.0:
            quartic = 0.25 * u.spec.cell_volume * np.sum(np.abs(u.data[i]) ** 4)
            e = e - quartic + rho * quartic
        M.append(m)
        E.append(e)
    return ConservationTable(u.times.copy(), np.array(M), np.array(E))


def equation_residual(u: Trajectory, rho: float = 1.0) -> Trajectory:
    """e = i d_t u + Delta u - rho u|u|^2 with centered differences in time."""
    if len(u) < 3:
        raise ValueError("need at least 3 samples to form a residual")
    t = u.times
    dudt = np.gradient(u.data, t, axis=0, edge_order=2)
    xi2 = u.spec.xi_sq()
    out = np.empty_like(u.data)
    for i in range(len(u)):
        lap = ifftn(-xi2 * fftn(u.data[i]))
        out[i] = 1j * dudt[i] + lap - rho * u.data[i] * np.abs(u.data[i]) ** 2
    return Trajectory(u.spec, t, out, u.dt)


@dataclass
class StabilityReport:
    eps_in: float
    data_gap: float
    forcing: float
    deviation: float
    amplification: float


def stability_experiment(base: Trajectory, e: Trajectory | None, u0: Field,
                         cfg: SolveConfig = SolveConfig()) -> StabilityReport:
    """Solve exactly from u0 and compare with the approximate solution ``base``.

    eps_in = ||u0 - base(t0)||_{H^1} + duhamel_norm(e); if e is None it is
    measured from ``base`` by finite differences.
    """
    if e is None:
        e = equation_residual(base, cfg.rho)
    spec = base.spec
    t0 = float(base.times[0])
    gap = h1_distance(u0.values, base.data[0], spec)
    forcing = duhamel_norm(e) if np.any(e.data) else 0.0
    eps = gap + forcing
    span = float(base.times[-1] - t0)
    gaps = np.diff(base.times)
    stride = max(1, int(round(gaps[0] / cfg.dt)))
    h = gaps[0] / stride
    run = evolve(u0, span, SolveConfig(dt=h, rho=cfg.rho, record_stride=stride), t0=t0, check=False)
    if len(run) != len(base) or not np.allclose(run.times, base.times, rtol=0, atol=1e-9 * max(1, span)):
        raise ValueError("base trajectory must be uniformly sampled")
    dev = max(h1_distance(run.data[i], base.data[i], spec) for i in range(len(base)))
    if not math.isfinite(dev):
        raise NumericalAbort("non-finite deviation in stability experiment")
    amp = dev / eps if eps > 0 else 0.0
    return StabilityReport(eps, gap, forcing, dev, amp)


@dataclass
class ComparisonReport:
    N: float
    R: float
    T0: float
    discrepancy: float
    times: np.ndarray = field(repr=False)
    per_time: np.ndarray = field(repr=False)
    relative: float = 0.0


def euclidean_comparison(phi: EuclidField, N: float, R: float, T0: float, spec: GridSpec,
                         ds: float = 0.01, rho: float = 1.0, record_stride: int = 1,
                         t_shift: float = 0.0, resolution_tol: float = 1e-6,
                         u0: Field | None = None) -> ComparisonReport:
    """Compare U_N (torus solution from f_N) with the windowed rescaled R^4 solution.

    The R^4 solution v' is evolved from phi over |s| <= T0 with step ``ds``;
    U_N is evolved over |t| <= T0 N^{-2} with step ds N^{-2}. At every
    recorded time the sup-H^1 distance ||U_N - V_{R,N}|| is taken.
    ``t_shift`` starts the R^4 solution at s0 = t_shift, with data
    e^{i s0 Delta} phi, which is used for frames with nonzero time; the
    torus data then defaults to T_N of that shifted profile unless ``u0``
    is given.
    """
    if N < 10 * R:
        warnings.warn(f"N={N} < 10R={10 * R}: outside the regime of the comparison lemma", ChartWarning,
                      stacklevel=2)
    start = phi
    if t_shift != 0:
        c = fftn(phi.values) * np.exp(-1j * t_shift * phi.k_sq())
        start = phi.with_values(ifftn(c))
    if not np.any(phi.values):
        n, _ = _step_count(T0, ds)
        ts = np.linspace(-T0, T0, 2 * (n // record_stride) + 1) / N**2
        return ComparisonReport(N, R, T0, 0.0, ts, np.zeros_like(ts))
    fN = rescale_TN(start, spec, N) if u0 is None else u0
    frac = tail_fraction(fN, 0.5)
    if frac > resolution_tol:
        raise ResolutionError(f"scale N={N} is not resolved: tail fraction {frac:.2e}")
    if euclid_tail_fraction(start) > resolution_tol:
        raise ResolutionError("R^4 data not resolved on the box")
    cfg = SolveConfig(dt=ds / N**2, rho=rho, record_stride=record_stride, resolution_tol=resolution_tol)
    fwd = evolve(fN, T0 / N**2, cfg, check=False)
    bwd = evolve(fN, -T0 / N**2, cfg, check=False)
    ts_e, fwd_e = evolve_euclid(start, T0, ds, rho, record_stride)
    _, bwd_e = evolve_euclid(start, -T0, ds, rho, record_stride)
    times = np.concatenate([bwd.times[:-1], fwd.times])
    U = np.concatenate([bwd.data[:-1], fwd.data])
    Ve = np.concatenate([bwd_e[:-1], fwd_e])
    per = np.empty(times.size)
    ref = 0.0
    for i in range(times.size):
        V = windowed_rescale(phi.with_values(Ve[i]), spec, N, R)
        per[i] = h1_distance(U[i], V.values, spec)
        ref = max(ref, _h1_from_coeffs(spec, fftn(U[i])))
    disc = float(per.max())
    return ComparisonReport(N, R, T0, disc, times, per, disc / ref if ref > 0 else 0.0)


@dataclass
class BlowupReport:
    intervals: list
    values: np.ndarray
    growing: bool


def blowup_monitor(u: Trajectory, pieces: int = 8, growth_factor: float = 4.0) -> BlowupReport:
    """Z-norm on consecutive subintervals; flags a monotone increase by ``growth_factor``."""
    Ns, table = shell_l4_table(u)
    edges = np.round(np.linspace(0, len(u) - 1, min(pieces, len(u) - 1) + 1)).astype(int)
    vals, ivs = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoarseSamplingWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            sub = Trajectory(u.spec, u.times[a : b + 1], u.data[a : b + 1], u.dt)
            vals.append(z_norm(sub, Ns=Ns, table=table[a : b + 1]).value)
            ivs.append((float(u.times[a]), float(u.times[b])))
    v = np.array(vals)
    growing = bool(v.size > 1 and np.all(np.diff(v) > 0) and v[-1] > growth_factor * max(v[0], 1e-300))
    return BlowupReport(ivs, v, growing)


def write_trajectory(u: Trajectory, directory, rho: float = 1.0) -> Path:
    """Write field files ``u_00000.spn`` plus ``times.csv`` (step, t, M, E)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    table = check_conservation(u, rho)
    step_of = (lambda t: int(round((t - u.times[0]) / u.dt))) if u.dt else (lambda t: None)
    lines = ["step,t,M,E"]
    for i, t, M, E in table.rows():
        write_field(u.field(i), d / f"u_{i:05d}.spn", t=t)
        s = step_of(t)
        lines.append(f"{s if s is not None else i},{t!r},{M!r},{E!r}")
    (d / "times.csv").write_text("\n".join(lines) + "\n")
    return d
