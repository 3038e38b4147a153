"""Discretization of R x T^3 and of R^4, Fourier transforms, and field files.

The non-periodic direction is modeled by a circle of circumference
``2*pi*L1`` (a "long torus"). Arrays are stored with shape
``(n1, nper, nper, nper)`` in C order, so ``x1`` is the slowest index and a
flattened field has length ``n1 * nper**3``.

Fourier normalization
---------------------
The forward transform is the Riemann sum of the continuum integral

    F f(xi) = int f(x) exp(-i x.xi) dx  ~  dV * sum_x f(x) exp(-i x.xi),

on the lattice ``xi in (1/L1) Z x Z^3``. The inverse carries the constant
``c = (2 pi)^-4`` of the inversion formula together with the ``1/L1``
spacing of the xi_1 lattice, so that ``inverse(forward(f)) == f`` and

    ||f||_2^2 = (2 pi)^-4 / L1 * sum_xi |F f(xi)|^2.
"""
from __future__ import annotations

import functools
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

__all__ = [
    "GridError",
    "FieldFormatError",
    "GridSpec",
    "Field",
    "Spectrum",
    "EuclidField",
    "forward_fourier",
    "inverse_fourier",
    "write_field",
    "read_field",
    "write_euclid_field",
    "read_euclid_field",
    "fft_workers",
    "fftn",
    "ifftn",
    "support_indices",
    "pruned_ifftn",
    "sample_trig",
]


class GridError(ValueError):
    """A grid or field violates its structural invariants."""


class FieldFormatError(ValueError):
    """A field file is malformed or truncated."""


def fft_workers() -> int:
    try:
        n = int(os.environ.get("SPNLS_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def fftn(a, axes=None):
    return sfft.fftn(a, axes=axes, workers=fft_workers())


def ifftn(a, axes=None):
    return sfft.ifftn(a, axes=axes, workers=fft_workers())


def support_indices(mask: np.ndarray) -> list[np.ndarray]:
    """Per-axis index sets whose tensor product contains the nonzeros of ``mask``."""
    mask = np.asarray(mask, dtype=bool)
    axes = range(mask.ndim)
    return [np.flatnonzero(mask.any(axis=tuple(b for b in axes if b != a))) for a in axes]


def pruned_ifftn(block: np.ndarray, idx, shape) -> np.ndarray:
    """ifftn of the full array that equals ``block`` on np.ix_(*idx) and 0 elsewhere.

    Axes are transformed one at a time and only the slabs that can be
    nonzero are expanded, which saves work for narrow band-limited data.
    """
    a = block
    if tuple(a.shape) == tuple(shape):
        return sfft.ifftn(a, workers=fft_workers())
    for ax in range(a.ndim):
        full_shape = list(a.shape)
        full_shape[ax] = shape[ax]
        full = np.zeros(full_shape, dtype=a.dtype)
        sl = [slice(None)] * a.ndim
        sl[ax] = idx[ax]
        full[tuple(sl)] = a
        a = sfft.ifft(full, axis=ax, workers=fft_workers())
    return a


def _is_pow2(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on the long torus (R / 2 pi L1 Z) x T^3."""

    L1: int = 16
    n1: int = 512
    nper: int = 32

    def __post_init__(self):
        if not isinstance(self.L1, (int, np.integer)) or self.L1 < 1:
            raise GridError(f"L1 must be an integer >= 1, got {self.L1!r}")
        for name in ("n1", "nper"):
            n = getattr(self, name)
            if not _is_pow2(n) or n < 4:
                raise GridError(f"{name} must be a power of two >= 4, got {n!r}")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.n1, self.nper, self.nper, self.nper)

    @property
    def size(self) -> int:
        return self.n1 * self.nper**3

    @property
    def dx1(self) -> float:
        return 2 * math.pi * self.L1 / self.n1

    @property
    def dxp(self) -> float:
        return 2 * math.pi / self.nper

    @property
    def cell_volume(self) -> float:
        return self.dx1 * self.dxp**3

    @property
    def volume(self) -> float:
        return 2 * math.pi * self.L1 * (2 * math.pi) ** 3

    @property
    def fourier_weight(self) -> float:
        """Weight turning sum_xi |F f|^2 into ||f||_2^2."""
        return 1.0 / ((2 * math.pi) ** 4 * self.L1)

    @property
    def nyquist(self) -> float:
        return min(self.n1 / (2 * self.L1), self.nper / 2)

    @property
    def isotropic(self) -> bool:
        return self.n1 == self.L1 * self.nper

    def max_dyadic(self, fraction: float = 0.5) -> int:
        """Largest power of two N with N <= fraction * nyquist."""
        lim = fraction * self.nyquist
        if lim < 1:
            return 0
        return 2 ** int(math.floor(math.log2(lim) + 1e-12))

    def xi1(self) -> np.ndarray:
        return sfft.fftfreq(self.n1, d=1.0 / self.n1) / self.L1

    def xip(self) -> np.ndarray:
        return sfft.fftfreq(self.nper, d=1.0 / self.nper)

    def axes_xi(self) -> list[np.ndarray]:
        return [self.xi1(), self.xip(), self.xip(), self.xip()]

    def x1(self) -> np.ndarray:
        return np.arange(self.n1) * self.dx1

    def xp(self) -> np.ndarray:
        return np.arange(self.nper) * self.dxp

    def axes_x(self) -> list[np.ndarray]:
        return [self.x1(), self.xp(), self.xp(), self.xp()]

    def periods(self) -> tuple[float, float, float, float]:
        p = 2 * math.pi
        return (p * self.L1, p, p, p)

    def centered_axes(self) -> list[np.ndarray]:
        """Coordinates wrapped into [-P/2, P/2) on every axis."""
        out = []
        for x, P in zip(self.axes_x(), self.periods()):
            out.append((x + P / 2) % P - P / 2)
        return out

    def xi_sq(self) -> np.ndarray:
        return _xi_sq(self)

    def broadcast(self, axis: int, arr: np.ndarray) -> np.ndarray:
        shape = [1, 1, 1, 1]
        shape[axis] = -1
        return np.asarray(arr).reshape(shape)

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.shape, dtype=complex))


@functools.lru_cache(maxsize=16)
def _xi_sq(spec: GridSpec) -> np.ndarray:
    a, b = spec.xi1(), spec.xip()
    out = (a**2)[:, None, None, None] + (b**2)[None, :, None, None]
    out = out + (b**2)[None, None, :, None] + (b**2)[None, None, None, :]
    out.setflags(write=False)
    return out


def _as_grid_array(spec: GridSpec, values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=complex)
    if arr.ndim == 1:
        if arr.size != spec.size:
            raise GridError(f"{what}: length {arr.size} does not match grid size {spec.size}")
        arr = arr.reshape(spec.shape)
    elif arr.shape != spec.shape:
        raise GridError(f"{what}: shape {arr.shape} does not match grid shape {spec.shape}")
    if not np.all(np.isfinite(arr)):
        raise GridError(f"{what}: non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples of a function on the grid (physical space)."""

    spec: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = _as_grid_array(self.spec, self.values, "Field")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def with_values(self, values) -> "Field":
        return Field(self.spec, values)

    def __add__(self, other: "Field") -> "Field":
        _same_spec(self, other)
        return Field(self.spec, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _same_spec(self, other)
        return Field(self.spec, self.values - other.values)

    def __mul__(self, c) -> "Field":
        return Field(self.spec, self.values * complex(c))

    __rmul__ = __mul__

    def conj(self) -> "Field":
        return Field(self.spec, np.conj(self.values))


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Fourier coefficients on the lattice (1/L1) Z x Z^3, FFT index order."""

    spec: GridSpec
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = _as_grid_array(self.spec, self.coeffs, "Spectrum")
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    def energy(self) -> float:
        """Plancherel-weighted coefficient energy, equal to ||f||_2^2."""
        return float(self.spec.fourier_weight * np.sum(np.abs(self.coeffs) ** 2))

    def with_coeffs(self, coeffs) -> "Spectrum":
        return Spectrum(self.spec, coeffs)


def _same_spec(a, b):
    if a.spec != b.spec:
        raise GridError(f"grid mismatch: {a.spec} vs {b.spec}")


def forward_fourier(f: Field) -> Spectrum:
    if not isinstance(f, Field):
        raise GridError("forward_fourier expects a Field")
    return Spectrum(f.spec, fftn(f.values) * f.spec.cell_volume)


def inverse_fourier(s: Spectrum) -> Field:
    if not isinstance(s, Spectrum):
        raise GridError("inverse_fourier expects a Spectrum")
    return Field(s.spec, ifftn(s.coeffs) / s.spec.cell_volume)


# ---------------------------------------------------------------------------
# R^4 box


@dataclass(frozen=True, eq=False)
class EuclidField:
    """Samples on the periodic box [-pi*side, pi*side)^4 approximating R^4.

    Grid point ``j`` sits at ``j*h`` (wrapped), ``h = 2*pi*side/n4``, so the
    origin is index 0 on every axis, exactly as for :class:`Field`.
    """

    side: float
    n4: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (self.side > 0 and math.isfinite(self.side)):
            raise GridError(f"side must be positive, got {self.side!r}")
        if not _is_pow2(self.n4) or self.n4 < 8:
            raise GridError(f"n4 must be a power of two >= 8, got {self.n4!r}")
        shape = (self.n4,) * 4
        arr = np.asarray(self.values, dtype=complex)
        if arr.ndim == 1 and arr.size == self.n4**4:
            arr = arr.reshape(shape)
        if arr.shape != shape:
            raise GridError(f"EuclidField: shape {arr.shape} does not match {shape}")
        if not np.all(np.isfinite(arr)):
            raise GridError("EuclidField: non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def h(self) -> float:
        return 2 * math.pi * self.side / self.n4

    @property
    def half_width(self) -> float:
        return math.pi * self.side

    @property
    def cell_volume(self) -> float:
        return self.h**4

    def coords(self) -> np.ndarray:
        P = 2 * math.pi * self.side
        x = np.arange(self.n4) * self.h
        return (x + P / 2) % P - P / 2

    def freqs(self) -> np.ndarray:
        return sfft.fftfreq(self.n4, d=1.0 / self.n4) / self.side

    def radius(self) -> np.ndarray:
        c = self.coords()
        r2 = (c**2)[:, None, None, None] + (c**2)[None, :, None, None]
        r2 = r2 + (c**2)[None, None, :, None] + (c**2)[None, None, None, :]
        return np.sqrt(r2)

    def k_sq(self) -> np.ndarray:
        k = self.freqs() ** 2
        return k[:, None, None, None] + k[None, :, None, None] + k[None, None, :, None] + k[None, None, None, :]

    def with_values(self, values) -> "EuclidField":
        return EuclidField(self.side, self.n4, values)

    @classmethod
    def from_function(cls, func, side: float, n4: int) -> "EuclidField":
        """Sample ``func(y1, y2, y3, y4)`` (broadcasting) on the box."""
        c = (np.arange(n4) * 2 * math.pi * side / n4 + math.pi * side) % (2 * math.pi * side) - math.pi * side
        ys = [c.reshape([-1 if a == i else 1 for a in range(4)]) for i in range(4)]
        return cls(side, n4, np.broadcast_to(func(*ys), (n4,) * 4).astype(complex))

    def l2_norm(self) -> float:
        return float(np.sqrt(self.cell_volume * np.sum(np.abs(self.values) ** 2)))

    def hdot1_norm(self) -> float:
        """Homogeneous H^1 norm ||grad phi||_2 computed spectrally."""
        c = fftn(self.values)
        n = self.n4**4
        return float(np.sqrt(self.cell_volume / n * np.sum(self.k_sq() * np.abs(c) ** 2)))


# ---------------------------------------------------------------------------
# trigonometric interpolation on tensor products of points


def _eval_matrix(n: int, period: float, points: np.ndarray) -> np.ndarray:
    k = sfft.fftfreq(n, d=1.0 / n)
    y = np.asarray(points, dtype=float)[:, None]
    E = np.exp(2j * math.pi * k[None, :] * y / period)
    # symmetric treatment of the Nyquist mode keeps real data real
    E[:, n // 2] = np.cos(math.pi * n * y[:, 0] / period)
    return E


def sample_trig(values: np.ndarray, periods, points) -> np.ndarray:
    """Evaluate the trigonometric interpolant of periodic grid data.

    ``values`` holds samples at ``j * P_a / n_a`` on every axis ``a``;
    ``points`` is a list of 1-D coordinate arrays, one per axis. Returns the
    interpolant on their tensor product. Exact for band-limited data.
    """
    coef = fftn(values) / values.size
    out = coef
    for axis, (P, pts) in enumerate(zip(periods, points)):
        E = _eval_matrix(values.shape[axis], P, pts)
        out = np.moveaxis(np.tensordot(E, out, axes=([1], [axis])), 0, axis)
    return out


# ---------------------------------------------------------------------------
# field files


def _write(path, header: str, values: np.ndarray):
    data = np.empty(values.size * 2, dtype="<f8")
    flat = values.reshape(-1)
    data[0::2] = flat.real
    data[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(data.tobytes())


def _read_header(path, magic: str):
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FieldFormatError(f"{path}: malformed header (no header line)")
    try:
        tokens = raw[:nl].decode("ascii").split()
    except UnicodeDecodeError as exc:
        raise FieldFormatError(f"{path}: malformed header") from exc
    if not tokens or tokens[0] != magic:
        raise FieldFormatError(f"{path}: malformed header (expected {magic})")
    return tokens[1:], raw[nl + 1 :]


def _payload(path, body: bytes, count: int) -> np.ndarray:
    need = 16 * count
    if len(body) < need:
        raise FieldFormatError(f"{path}: truncated payload ({len(body)} of {need} bytes)")
    if len(body) > need:
        raise FieldFormatError(f"{path}: dimension mismatch ({len(body)} bytes, expected {need})")
    data = np.frombuffer(body, dtype="<f8")
    return data[0::2] + 1j * data[1::2]


def write_field(f: Field, path, t: float | None = None) -> None:
    """Write ``SPNLS1 <L1> <n1> <nper> [t]`` then little-endian (re, im) pairs."""
    s = f.spec
    header = f"SPNLS1 {s.L1} {s.n1} {s.nper}"
    if t is not None:
        header += f" {float(t)!r}"
    _write(path, header + "\n", f.values)


def read_field(path, return_time: bool = False):
    tokens, body = _read_header(path, "SPNLS1")
    if len(tokens) not in (3, 4):
        raise FieldFormatError(f"{path}: malformed header (expected 3 or 4 fields)")
    try:
        L1, n1, nper = (int(tok) for tok in tokens[:3])
        t = float(tokens[3]) if len(tokens) == 4 else None
    except ValueError as exc:
        raise FieldFormatError(f"{path}: malformed header") from exc
    spec = GridSpec(L1, n1, nper)
    f = Field(spec, _payload(path, body, spec.size))
    return (f, t) if return_time else f


def write_euclid_field(f: EuclidField, path) -> None:
    _write(path, f"SPNLS4 {float(f.side)!r} {f.n4}\n", f.values)


def read_euclid_field(path) -> EuclidField:
    tokens, body = _read_header(path, "SPNLS4")
    if len(tokens) != 2:
        raise FieldFormatError(f"{path}: malformed header (expected 2 fields)")
    try:
        side, n4 = float(tokens[0]), int(tokens[1])
    except ValueError as exc:
        raise FieldFormatError(f"{path}: malformed header") from exc
    if not _is_pow2(n4) or n4 < 8:
        raise GridError(f"n4 must be a power of two >= 8, got {n4}")
    return EuclidField(side, n4, _payload(path, body, n4**4))
