"""Norms, conserved quantities and space-time functionals of sampled solutions.

Where an X^1 restriction norm would be needed, the sup-in-time H^1 norm is
used in its place. That quantity is computable and is bounded by X^1.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .grid import Field, GridError, GridSpec, fftn, ifftn, pruned_ifftn, support_indices
from .spectral import dyadics_up_to, shell_multiplier

__all__ = [
    "X1_SURROGATE",
    "CoarseSamplingWarning",
    "Trajectory",
    "NormReport",
    "l2_norm",
    "h1_norm",
    "lp_norm",
    "mass_energy",
    "shell_l4_table",
    "z_norm",
    "zprime_norm",
    "sup_h1",
    "duhamel_norm",
    "refined_sobolev_check",
    "trapezoid_weights",
]

X1_SURROGATE = "sup_t H1"


class CoarseSamplingWarning(UserWarning):
    """A time integral was evaluated on fewer than 8 samples."""


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    w = np.zeros_like(t)
    if t.size < 2:
        return w
    d = np.diff(t)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time samples ``times[i]`` of a solution, stacked in ``data[i]``."""

    spec: GridSpec
    times: np.ndarray
    data: np.ndarray = field(repr=False)
    dt: float | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise GridError("a trajectory needs at least 2 time samples")
        if np.any(np.diff(t) <= 0):
            raise GridError("trajectory times must be strictly increasing")
        arr = np.asarray(self.data, dtype=complex)
        if arr.shape != (t.size,) + self.spec.shape:
            raise GridError(f"trajectory data shape {arr.shape} does not match {(t.size,) + self.spec.shape}")
        t.setflags(write=False)
        arr.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_fields(cls, times, fields, dt=None) -> "Trajectory":
        fields = list(fields)
        spec = fields[0].spec
        for f in fields:
            if f.spec != spec:
                raise GridError("all fields of a trajectory must share one grid")
        return cls(spec, np.asarray(times, float), np.stack([f.values for f in fields]), dt)

    def __len__(self) -> int:
        return self.times.size

    def field(self, i: int) -> Field:
        return Field(self.spec, self.data[i])

    @property
    def fields(self) -> list[Field]:
        return [self.field(i) for i in range(len(self))]

    @property
    def uniform(self) -> bool:
        d = np.diff(self.times)
        return bool(np.allclose(d, d[0], rtol=1e-9, atol=0))

    @property
    def interval(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def restrict(self, interval) -> "Trajectory":
        if interval is None:
            return self
        lo, hi = interval
        tol = 1e-12 * max(1.0, abs(lo), abs(hi))
        m = (self.times >= lo - tol) & (self.times <= hi + tol)
        if m.sum() < 2:
            raise GridError(f"interval {interval} contains fewer than 2 samples")
        return Trajectory(self.spec, self.times[m], self.data[m], self.dt)

    def scaled(self, c) -> "Trajectory":
        return Trajectory(self.spec, self.times, self.data * complex(c), self.dt)


@dataclass
class NormReport:
    name: str
    interval: tuple[float, float]
    value: float
    breakdown: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    surrogate: str | None = None

    def csv_row(self) -> list[str]:
        row = [self.name, repr(float(self.interval[0])), repr(float(self.interval[1])), repr(float(self.value))]
        row += [f"{k}:{float(v)!r}" for k, v in sorted(self.breakdown.items())]
        return row


# ---------------------------------------------------------------------------
# single-field norms


def l2_norm(f: Field) -> float:
    return float(np.sqrt(f.spec.cell_volume * np.sum(np.abs(f.values) ** 2)))


def lp_norm(f: Field, p: float) -> float:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    a = np.abs(f.values)
    if math.isinf(p):
        return float(a.max())
    return float((f.spec.cell_volume * np.sum(a**p)) ** (1.0 / p))


def _h1_from_coeffs(spec: GridSpec, c: np.ndarray) -> float:
    # c are raw fftn coefficients; ||f||^2 = dV/n * sum |c|^2
    w = spec.cell_volume / spec.size
    return float(np.sqrt(w * np.sum((1.0 + spec.xi_sq()) * np.abs(c) ** 2)))


def h1_norm(f: Field) -> float:
    return _h1_from_coeffs(f.spec, fftn(f.values))


def mass_energy(f: Field) -> tuple[float, float]:
    """Mass int |f|^2 and energy 1/2 int |grad f|^2 + 1/4 int |f|^4."""
    s = f.spec
    a2 = np.abs(f.values) ** 2
    M = s.cell_volume * a2.sum()
    c = fftn(f.values)
    kin = s.cell_volume / s.size * np.sum(s.xi_sq() * np.abs(c) ** 2)
    E = 0.5 * kin + 0.25 * s.cell_volume * np.sum(a2**2)
    return float(M), float(E)


# ---------------------------------------------------------------------------
# space-time functionals


def shell_l4_table(u: Trajectory, Ns=None) -> tuple[list[int], np.ndarray]:
    """Table of N^2 ||P_N u(t_i)||_{L^4}^4 with shape (len(times), len(Ns))."""
    spec = u.spec
    Ns = list(dyadics_up_to(spec) if Ns is None else Ns)
    mults = [shell_multiplier(spec, N) for N in Ns]
    out = np.zeros((len(u), len(Ns)))
    for i in range(len(u)):
        c = fftn(u.data[i])
        for j, (N, m) in enumerate(zip(Ns, mults)):
            g = ifftn(c * m)
            out[i, j] = N**2 * spec.cell_volume * np.sum(np.abs(g) ** 4)
    return Ns, out


def _dyadic_windows(times: np.ndarray, max_len: float = 1.0):
    """Index windows [i0, i1] from repeated halving of the sample range."""
    n = times.size - 1
    out = []
    level = 0
    while True:
        parts = 2**level
        if parts > n:
            break
        edges = np.round(np.linspace(0, n, parts + 1)).astype(int)
        for a, b in zip(edges[:-1], edges[1:]):
            if b > a and times[b] - times[a] <= max_len * (1 + 1e-12):
                out.append((int(a), int(b)))
        level += 1
    return out


def z_norm(u: Trajectory, I=None, Ns=None, table=None) -> NormReport:
    """Z-norm: sup over dyadic sample windows J, |J| <= 1, of
    (int_J sum_N N^2 ||P_N u||_{L^4}^4 dt)^{1/4}."""
    u = u.restrict(I)
    if table is None:
        Ns, table = shell_l4_table(u, Ns)
    windows = _dyadic_windows(u.times)
    best, best_w, best_b = 0.0, windows[0] if windows else (0, 1), None
    for a, b in windows:
        w = trapezoid_weights(u.times[a : b + 1])
        per_N = w @ table[a : b + 1]
        tot = float(per_N.sum())
        if best_b is None or tot > best:
            best, best_w, best_b = tot, (a, b), per_N
    a, b = best_w
    warn = []
    if b - a + 1 < 8:
        warn.append(f"coarse sampling: {b - a + 1} samples in J")
        warnings.warn(warn[-1], CoarseSamplingWarning, stacklevel=2)
    breakdown = {int(N): float(max(v, 0.0) ** 0.25) for N, v in zip(Ns, best_b)}
    return NormReport("Z", (float(u.times[a]), float(u.times[b])), float(max(best, 0.0) ** 0.25), breakdown, warn)


def sup_h1(u: Trajectory, I=None) -> float:
    u = u.restrict(I)
    return max(_h1_from_coeffs(u.spec, fftn(u.data[i])) for i in range(len(u)))


def zprime_norm(u: Trajectory, I=None) -> float:
    """Z^{3/4} times the (sup_t H^1)^{1/4} surrogate of X^1."""
    u = u.restrict(I)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoarseSamplingWarning)
        z = z_norm(u).value
    return float(z**0.75 * sup_h1(u) ** 0.25)


def duhamel_norm(h: Trajectory, I=None) -> float:
    """sup_t H^1 of int_a^t exp(i(t-s)Delta) h(s) ds, trapezoid in s."""
    h = h.restrict(I)
    spec = h.spec
    if len(h) < 8:
        warnings.warn(f"coarse sampling: {len(h)} samples", CoarseSamplingWarning, stacklevel=2)
    xi2 = spec.xi_sq()
    acc = np.zeros(spec.shape, dtype=complex)
    prev = fftn(h.data[0]) * np.exp(1j * h.times[0] * xi2)
    best = 0.0
    for i in range(1, len(h)):
        cur = fftn(h.data[i]) * np.exp(1j * h.times[i] * xi2)
        acc += 0.5 * (h.times[i] - h.times[i - 1]) * (prev + cur)
        prev = cur
        best = max(best, _h1_from_coeffs(spec, acc))
    return best


def refined_sobolev_check(f: Field, Ns=None) -> float:
    """||f||_4 / [(sup_N N^{-1} ||P_N f||_inf)^{1/2} ||f||_{H^1}^{1/2}]."""
    spec = f.spec
    c = fftn(f.values)
    if not np.any(c):
        raise ValueError("refined Sobolev ratio is undefined for the zero field")
    Ns = dyadics_up_to(spec) if Ns is None else Ns
    sup = 0.0
    for N in Ns:
        m = c * shell_multiplier(spec, N)
        nz = m != 0
        if not nz.any():
            continue
        idx = support_indices(nz)
        sup = max(sup, np.abs(pruned_ifftn(m[np.ix_(*idx)], idx, spec.shape)).max() / N)
    return float(lp_norm(f, 4) / (math.sqrt(sup) * math.sqrt(_h1_from_coeffs(spec, c))))
