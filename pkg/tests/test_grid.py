import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spnls.grid import (EuclidField, Field, FieldFormatError, GridError, GridSpec, Spectrum,
                        forward_fourier, inverse_fourier, pruned_ifftn, read_euclid_field, read_field,
                        sample_trig, support_indices, write_euclid_field, write_field)

from conftest import random_field

specs = st.builds(GridSpec, st.sampled_from([1, 2]), st.sampled_from([8, 16]), st.sampled_from([4, 8]))


def test_grid_validation():
    with pytest.raises(GridError):
        GridSpec(0, 8, 8)
    with pytest.raises(GridError):
        GridSpec(1, 12, 8)
    with pytest.raises(GridError):
        GridSpec(1, 8, 2)
    s = GridSpec(2, 32, 16)
    assert s.shape == (32, 16, 16, 16)
    assert s.isotropic
    assert s.nyquist == 8
    assert s.max_dyadic(0.5) == 4
    assert np.allclose(np.diff(s.xi1()[:3]), 0.5)


def test_field_shape_checks(small_spec):
    with pytest.raises(GridError):
        Field(small_spec, np.zeros(10))
    with pytest.raises(GridError):
        Field(small_spec, np.full(small_spec.shape, np.nan))
    f = Field(small_spec, np.zeros(small_spec.size))
    assert f.values.shape == small_spec.shape
    assert not f.values.flags.writeable
    with pytest.raises(GridError):
        f + GridSpec(1, 16, 8).zeros()


@given(specs, st.integers(0, 2**31 - 1))
def test_plancherel_and_inversion(spec, seed):
    f = random_field(spec, np.random.default_rng(seed))
    s = forward_fourier(f)
    l2 = spec.cell_volume * np.sum(np.abs(f.values) ** 2)
    assert s.energy() == pytest.approx(l2, rel=1e-12)
    assert np.allclose(inverse_fourier(s).values, f.values, atol=1e-12)


def test_forward_transform_of_plane_wave():
    spec = GridSpec(2, 16, 8)
    x = spec.axes_x()
    k = (3 / 2, 1, -2, 0)
    v = np.ones(spec.shape, complex)
    for a in range(4):
        v = v * spec.broadcast(a, np.exp(1j * k[a] * x[a]))
    c = forward_fourier(Field(spec, v)).coeffs
    idx = tuple(int(np.argmin(np.abs(xi - kk))) for xi, kk in zip(spec.axes_xi(), k))
    assert abs(c[idx]) == pytest.approx(spec.volume, rel=1e-12)
    c2 = c.copy()
    c2[idx] = 0
    assert np.max(np.abs(c2)) < 1e-9


def test_pruned_ifftn_matches_full(rng):
    shape = (16, 8, 8, 8)
    mask = np.zeros(shape, bool)
    mask[[1, 2, 15], :, :, :] = True
    mask[:, :, [0, 7], :] &= True
    mask[:, 3, :, :] = False
    full = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * mask
    idx = support_indices(mask)
    block = full[np.ix_(*idx)]
    assert np.allclose(pruned_ifftn(block, idx, shape), np.fft.ifftn(full), atol=1e-14)


@given(st.integers(0, 2**31 - 1))
def test_sample_trig_exact_on_band_limited(seed):
    rng = np.random.default_rng(seed)
    spec = GridSpec(1, 8, 8)
    f = random_field(spec, rng, smooth=3)
    pts = [rng.uniform(0, P, 3) for P in spec.periods()]
    got = sample_trig(f.values, spec.periods(), pts)
    c = forward_fourier(f).coeffs
    # direct synthesis at the off-grid points
    want = np.zeros((3, 3, 3, 3), complex)
    xis = spec.axes_xi()
    E = [np.exp(1j * np.outer(p, xi)) for p, xi in zip(pts, xis)]
    want = np.einsum("ai,bj,ck,dl,ijkl->abcd", *E, c) / (spec.volume)
    assert np.allclose(got, want, atol=1e-10)


def test_field_file_roundtrip(tmp_path, rng):
    spec = GridSpec(2, 16, 4)
    f = random_field(spec, rng)
    p = tmp_path / "u.bin"
    write_field(f, p, t=0.25)
    g, t = read_field(p, return_time=True)
    assert g.spec == spec and t == 0.25
    assert np.array_equal(g.values, f.values)
    write_field(f, p)
    assert read_field(p, return_time=True)[1] is None


def test_field_file_errors(tmp_path, rng):
    spec = GridSpec(1, 8, 4)
    p = tmp_path / "u.bin"
    write_field(random_field(spec, rng), p)
    raw = p.read_bytes()
    (tmp_path / "short.bin").write_bytes(raw[:-8])
    with pytest.raises(FieldFormatError, match="truncated"):
        read_field(tmp_path / "short.bin")
    (tmp_path / "long.bin").write_bytes(raw + b"\0" * 16)
    with pytest.raises(FieldFormatError, match="dimension"):
        read_field(tmp_path / "long.bin")
    (tmp_path / "bad.bin").write_bytes(b"NOPE 1 8 4\n")
    with pytest.raises(FieldFormatError, match="header"):
        read_field(tmp_path / "bad.bin")


def test_euclid_field_roundtrip_and_norms(tmp_path):
    w = 1.0
    phi = EuclidField.from_function(lambda a, b, c, d: np.exp(-(a * a + b * b + c * c + d * d) / (2 * w * w)),
                                    8 / math.pi, 32)
    assert phi.coords()[0] == 0.0
    # Gaussian exp(-r^2/2) in R^4: ||.||_2^2 = pi^2, ||grad||_2^2 = 2 pi^2
    assert phi.l2_norm() == pytest.approx(math.pi, rel=1e-8)
    assert phi.hdot1_norm() == pytest.approx(math.sqrt(2) * math.pi, rel=1e-6)
    p = tmp_path / "phi.bin"
    write_euclid_field(phi, p)
    back = read_euclid_field(p)
    assert back.side == phi.side and np.array_equal(back.values, phi.values)
    with pytest.raises(GridError):
        EuclidField(1.0, 12, np.zeros((12,) * 4))


def test_spectrum_rejects_bad_shape(small_spec):
    with pytest.raises(GridError):
        Spectrum(small_spec, np.zeros((2, 2)))
