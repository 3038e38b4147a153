import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spnls.grid import EuclidField, Field, GridSpec
from spnls.norms import l2_norm
from spnls.spectral import shell_multiplier
from spnls.strichartz import (ThresholdWarning, bilinear_scan, dispersive_scan, extinction_check,
                              local_smoothing_check, local_smoothing_sampled, loglog_fit, scan_grid,
                              spacetime_lp, strichartz_draw, strichartz_scan, write_report_csv)

from conftest import random_field


def test_loglog_fit_recovers_power_law():
    x = np.array([2.0, 4, 8, 16])
    a, b, r = loglog_fit(x, 3.0 * x**0.75)
    assert a == pytest.approx(0.75) and b == pytest.approx(math.log(3)) and r < 1e-12


def test_scan_grid():
    s = scan_grid(4, 2)
    assert s.shape == (32, 16, 16, 16) and s.nyquist == 8


def test_draws_have_unit_norm(rng):
    spec = scan_grid(2)
    for kind in ("gaussian", "concentrated"):
        c = strichartz_draw(spec, 2, rng, kind)
        assert math.sqrt(spec.cell_volume / spec.size * np.sum(np.abs(c) ** 2)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        strichartz_draw(spec, 2, rng, "nope")


def test_spacetime_l2_is_mass_times_length(rng):
    spec = scan_grid(2)
    c = strichartz_draw(spec, 2, rng, "gaussian")
    times = np.linspace(-1, 1, 33)
    assert spacetime_lp(c, spec, 2, times) == pytest.approx(math.sqrt(2.0), rel=1e-12)


@given(st.integers(0, 2**31 - 1), st.complex_numbers(min_magnitude=1e-2, max_magnitude=1e2))
def test_spacetime_lp_homogeneous(seed, a):
    spec = scan_grid(2)
    c = strichartz_draw(spec, 2, np.random.default_rng(seed), "gaussian")
    times = np.linspace(-1, 1, 9)
    assert spacetime_lp(a * c, spec, 4, times) == pytest.approx(abs(a) * spacetime_lp(c, spec, 4, times),
                                                                rel=1e-12)


def test_spacetime_lp_single_precision_and_nonuniform(rng):
    spec = scan_grid(2)
    c = strichartz_draw(spec, 2, rng, "concentrated")
    t = np.linspace(-1, 1, 40)
    ref = spacetime_lp(c, spec, 3.8, t)
    assert spacetime_lp(c, spec, 3.8, t, np.complex64) == pytest.approx(ref, rel=1e-5)
    # the direct (non-recursive) path on a uniform grid
    assert spacetime_lp(c, spec, 3.8, t, anchor=1) == pytest.approx(ref, rel=1e-12)
    tn = np.sort(np.concatenate([t, [0.013]]))
    assert spacetime_lp(c, spec, 3.8, tn) == pytest.approx(ref, rel=0.05)


def test_strichartz_scan_structure():
    r = strichartz_scan(p=4, Ns=(2, 4), ensemble_size=4, n_t=9)
    assert r.constants.shape == (2, 4)
    assert np.allclose(r.max_constants * np.array([2, 4]) ** 0.5, r.extra["raw_max"])
    again = strichartz_scan(p=4, Ns=(2, 4), ensemble_size=4, n_t=9)
    assert np.array_equal(r.constants, again.constants)
    with pytest.warns(ThresholdWarning):
        low = strichartz_scan(p=3.5, Ns=(2,), ensemble_size=1, n_t=5)
    assert "p<=18/5" in low.flags


def test_report_csv(tmp_path):
    r = strichartz_scan(p=4, Ns=(2,), ensemble_size=2, n_t=5)
    write_report_csv(r, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "p,N,draw,constant" and len(lines) == 1 + 2 + 2


def test_dispersive_delta_matches_full_fft():
    spec = scan_grid(4, 2)
    t = 0.3
    r = dispersive_scan(Ns=(4,), t_range=(t, 1.0), n_t=2, L1=2)
    m = shell_multiplier(spec, 4) * np.exp(-1j * t * spec.xi_sq())
    kernel = np.fft.ifftn(m) * spec.size / ((2 * math.pi) ** 4 * spec.L1)
    want = np.abs(kernel).max() * math.sqrt(t) / 4**3
    assert r.extra["per_t"][0, 0] == pytest.approx(want, rel=1e-10)
    rs = dispersive_scan(Ns=(2,), n_t=4, L1=2, family="random-signs", draws=2)
    assert rs.constants.shape == (1, 2) and np.all(rs.constants <= r.max_constants.max() * 10)
    with pytest.raises(ValueError):
        dispersive_scan(t_range=(0, 1))


def test_local_smoothing_exact_time_integral(rng):
    spec = GridSpec(2, 32, 16)
    phi = random_field(spec, rng, smooth=6)
    for K in (2, 4):
        exact = local_smoothing_check(phi, 0.25, K)
        assert local_smoothing_sampled(phi, 0.25, K, n_t=1025) == pytest.approx(exact, rel=1e-4)
    with pytest.raises(ValueError):
        local_smoothing_check(spec.zeros(), 0.25, 2)


def test_bilinear_scan_small():
    r = bilinear_scan([(4, 2), (4, 1)], ensemble=1, n_t=5)
    assert r.constants.shape == (2, 1) and np.all(r.constants > 0)
    with pytest.raises(ValueError):
        bilinear_scan([(1, 2)], ensemble=1, n_t=5)


def test_extinction_decreasing_in_T1():
    psi = EuclidField.from_function(lambda a, b, c, d: np.exp(-(a * a + b * b + c * c + d * d) / 2), 4, 16)
    r = extinction_check(psi, 4, T1s=(1, 2, 4), per_octave=2)
    assert r.decreasing and r.z_values[0] > 0
