import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spnls.grid import Field, GridError, GridSpec, forward_fourier
from spnls.norms import l2_norm
from spnls.spectral import (check_dyadic, cube_multiplier, dyadics_up_to, eta1, le_multiplier, nm_multiplier,
                            project_cube, project_N, propagate, random_band_limited, shell_multiplier,
                            spectral_gradient, tilde_delta_multiplier)

from conftest import random_field


def _eta1_oracle(y):
    # scalar re-derivation of the smooth step
    s = min(max(abs(y) - 1.0, 0.0), 1.0)
    g = lambda u: math.exp(-1.0 / u) if u > 0 else 0.0
    return g(1 - s) / (g(s) + g(1 - s))


@given(st.floats(-3, 3, allow_nan=False))
def test_eta1_matches_scalar_oracle(y):
    assert eta1(y) == pytest.approx(_eta1_oracle(y), abs=1e-15)


def test_eta1_shape():
    y = np.linspace(0, 2.5, 2001)
    v = eta1(y)
    assert np.all(v[y <= 1] == 1.0) and np.all(v[y >= 2] == 0.0)
    assert np.all(np.diff(v) <= 0)
    assert eta1(1.5) == pytest.approx(0.5, abs=1e-15)
    assert np.allclose(eta1(-y), v)


@pytest.mark.parametrize("spec", [GridSpec(1, 16, 16), GridSpec(2, 32, 16)])
def test_shells_telescope_to_le(spec):
    for top in dyadics_up_to(spec):
        total = sum(shell_multiplier(spec, N) for N in dyadics_up_to(spec) if N <= top)
        assert np.allclose(total, le_multiplier(spec, top), atol=1e-14)
    m = shell_multiplier(spec, 4)
    xi = np.sqrt(spec.xi_sq())
    assert np.all(m[xi < 4 / 2 * 0.999] == 0)
    assert np.all(m[xi > 8 * 2] == 0)
    assert np.all(m >= -1e-15) and np.all(m <= 1 + 1e-15)


def test_shells_partition_unity_below_cap():
    spec = GridSpec(1, 32, 32)
    Ns = dyadics_up_to(spec)
    total = sum(shell_multiplier(spec, N) for N in Ns)
    xi_inf = np.maximum(np.abs(spec.xi1())[:, None, None, None], 0)
    for a in range(1, 4):
        xi_inf = np.maximum(xi_inf, np.abs(spec.broadcast(a, spec.xip())))
    assert np.allclose(total[xi_inf <= Ns[-1]], 1.0, atol=1e-14)


def test_nm_bands_telescope():
    spec = GridSpec(2, 64, 16)
    for N in (2, 4, 8):
        Ms = [M for M in (1, 2, 4, 8) if M <= N]
        total = sum(nm_multiplier(spec, N, M) for M in Ms)
        assert np.allclose(total, shell_multiplier(spec, N), atol=1e-14)
    with pytest.raises(ValueError):
        nm_multiplier(spec, 2, 4)


def test_tilde_delta_multiplier_range():
    spec = GridSpec(2, 32, 16)
    m = tilde_delta_multiplier(spec, 0.25)
    assert np.all(m >= -1e-14) and np.all(m <= 1 + 1e-14)
    # frequencies with xi_1 = 0 are removed entirely
    assert np.all(m[0] == 0)
    with pytest.raises(ValueError):
        tilde_delta_multiplier(spec, 1.5)


def test_cubes_partition_lattice():
    spec = GridSpec(2, 16, 8)
    total = np.zeros(spec.shape, int)
    for z in itertools.product(range(-4, 5), range(-4, 5), range(-4, 5), range(-4, 5)):
        total += cube_multiplier(spec, z)
    assert np.all(total == 1)


def test_cube_projection_orthogonal(rng):
    spec = GridSpec(1, 8, 8)
    s = forward_fourier(random_field(spec, rng))
    a = project_cube(s, (0, 0, 0, 0)).coeffs
    b = project_cube(s, (1, 0, 0, 0)).coeffs
    assert np.vdot(a, b) == 0


def test_check_dyadic():
    spec = GridSpec(1, 16, 16)
    assert check_dyadic(spec, 4.0) == 4
    for bad in (3, 0, 16, -2):
        with pytest.raises(GridError):
            check_dyadic(spec, bad)


def test_multiplier_cache_is_read_only():
    spec = GridSpec(1, 8, 8)
    m = le_multiplier(spec, 2)
    assert m is le_multiplier(spec, 2.0)
    with pytest.raises(ValueError):
        m[0, 0, 0, 0] = 3


@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 2**31 - 1))
def test_propagator_group_law_and_unitarity(t, s, seed):
    spec = GridSpec(2, 16, 8)
    f = random_field(spec, np.random.default_rng(seed))
    a = propagate(propagate(f, t), s)
    b = propagate(f, t + s)
    assert np.allclose(a.values, b.values, atol=1e-11)
    assert l2_norm(propagate(f, t)) == pytest.approx(l2_norm(f), rel=1e-12)
    assert np.allclose(propagate(propagate(f, t), -t).values, f.values, atol=1e-12)


def test_propagator_plane_wave():
    spec = GridSpec(2, 16, 8)
    x = spec.axes_x()
    v = spec.broadcast(0, np.exp(1j * 1.5 * x[0])) * spec.broadcast(2, np.exp(-2j * x[2])) * np.ones(spec.shape)
    f = Field(spec, v)
    t = 0.37
    assert np.allclose(propagate(f, t).values, v * np.exp(-1j * (2.25 + 4) * t), atol=1e-12)


def test_projection_commutes_with_propagation(rng):
    spec = GridSpec(1, 16, 16)
    f = random_field(spec, rng)
    lhs = forward_fourier(propagate(f, 0.3))
    a = project_N(lhs, 2).coeffs
    b = forward_fourier(propagate(Field(spec, np.fft.ifftn(project_N(forward_fourier(f), 2).coeffs)
                                         / spec.cell_volume), 0.3)).coeffs
    assert np.allclose(a, b, atol=1e-9)


def test_spectral_gradient_sine():
    spec = GridSpec(1, 16, 8)
    x = spec.axes_x()
    f = Field(spec, np.sin(3 * spec.broadcast(1, x[1])) * np.ones(spec.shape))
    g = spectral_gradient(f)
    assert np.allclose(g[1], 3 * np.cos(3 * spec.broadcast(1, x[1])) * np.ones(spec.shape), atol=1e-12)
    assert np.allclose(g[0], 0, atol=1e-12)


def test_random_band_limited_support(rng):
    spec = GridSpec(1, 16, 16)
    v = random_band_limited(spec, 2, rng, shell=True)
    c = np.fft.fftn(v)
    assert np.all(np.abs(c[shell_multiplier(spec, 2) == 0]) < 1e-9)
