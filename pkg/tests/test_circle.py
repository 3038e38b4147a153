import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spnls.circle.arithmetic import (dirichlet_approx, divisor_count, divisor_counts, divisor_level_set_check,
                                     farey_bump_coeffs, farey_identity_check, mobius_table, ramanujan_bound_check,
                                     ramanujan_sum, ramanujan_sum_direct, ramanujan_table, totient)
from spnls.circle.decomposition import (eta_band, eta_ge, kernel_decomposition, ladder_K, lambda_window,
                                        level_L, partition_error, time_weights)
from spnls.circle.distribution import admissible_symbol, distributional_check, free_wave, superlevel_measure
from spnls.circle.weyl import (T_WINDOW, kernel_KN, line_factor, line_factor_sup, weyl_bound_check, weyl_sum,
                               weyl_sup_x, window)
from spnls.grid import GridSpec
from spnls.spectral import eta1


def _mu_oracle(n):
    out, m, p = 1, n, 2
    while p * p <= m:
        if m % p == 0:
            m //= p
            if m % p == 0:
                return 0
            out = -out
        p += 1
    return -out if m > 1 else out


# ---------------------------------------------------------------------------
# arithmetic


@given(st.floats(-20, 20, allow_nan=False), st.integers(1, 500))
def test_dirichlet_approximation(t, N):
    r = dirichlet_approx(t, N)
    assert 1 <= r.q <= N and math.gcd(r.a, r.q) == 1
    exact = Fraction(t / (2 * math.pi)) - Fraction(r.a, r.q)
    assert abs(exact) <= Fraction(1, N * r.q)
    assert r.beta == pytest.approx(float(exact), abs=1e-15)


def test_mobius_and_totient():
    mu = mobius_table(300)
    assert all(mu[n] == _mu_oracle(n) for n in range(1, 301))
    for q in range(1, 60):
        assert totient(q) == sum(1 for a in range(1, q + 1) if math.gcd(a, q) == 1)


@given(st.integers(1, 60), st.integers(-500, 500))
def test_ramanujan_sum_closed_form_vs_direct(q, m):
    exact = ramanujan_sum(q, m)
    d = ramanujan_sum_direct(q, m)
    assert abs(d - exact) < 1e-9
    if m == 0:
        assert exact == totient(q)


def test_ramanujan_table_rows():
    ms = np.arange(-40, 41)
    tab = ramanujan_table(12, ms)
    for q in range(1, 13):
        assert list(tab[q - 1]) == [ramanujan_sum(q, int(m)) for m in ms]


@given(st.integers(-3000, 3000), st.integers(1, 40))
def test_divisor_counts(m, Q):
    want = Q if m == 0 else sum(1 for d in range(1, Q + 1) if m % d == 0)
    assert divisor_count(m, Q) == want
    assert divisor_counts([m], Q)[0] == want


def test_farey_coefficients():
    ms = np.arange(-50, 51)
    c = farey_bump_coeffs(range(1, 5), 32, 4, ms)
    want = [sum(sum(np.exp(-2j * np.pi * m * a / q) for a in range(q) if math.gcd(a, q) == 1)
                for q in range(1, 5)).real for m in ms]
    assert np.allclose(c, want, atol=1e-9)
    with pytest.raises(ValueError):
        farey_bump_coeffs([1], 8, 4, 0)
    with pytest.raises(ValueError):
        farey_bump_coeffs([5], 64, 4, 0)


def test_farey_identity_small():
    r = farey_identity_check(range(1, 5), 32, 4, n_t=512, m_max=200)
    assert r.max_error < 1e-8 and r.max_error <= r.tail_bound
    assert r.max_abs_cm <= r.cm_bound == 64


def test_ramanujan_bound_small():
    r = ramanujan_bound_check(16, (-200, 200), 0.25)
    i = int(np.flatnonzero(r.ms == 12)[0])
    assert r.lhs[i] == sum(abs(ramanujan_sum(q, 12)) for q in range(1, 17))
    assert r.divisors[i] == divisor_count(12, 16)
    assert np.isfinite(r.max_ratio) and r.ratios[r.ms == r.argmax][0] == r.max_ratio
    with pytest.raises(ValueError):
        ramanujan_bound_check(16, (-5, 5), 0)


def test_divisor_level_set_brute_force():
    r = divisor_level_set_check(500, 12, 4, 0.25, 1.0)
    want = sum(1 for m in range(0, 501) if divisor_count(m, 12) >= 4)
    assert r.count == want
    assert r.implied_constant == pytest.approx(want / (4**-1 * 12**0.25 * 500 + 12))


# ---------------------------------------------------------------------------
# Weyl sums and the kernel


@given(st.floats(-10, 10), st.floats(-4, 4), st.sampled_from([1, 3, 8]))
def test_weyl_sum_direct(x, t, N):
    direct = sum(np.exp(-1j * t * n * n + 1j * x * n) * eta1(n / N) ** 2 for n in range(-2 * N, 2 * N + 1))
    assert abs(weyl_sum(x, t, N) - direct) < 1e-10


def test_weyl_sup_dominates_samples():
    N = 8
    ts = np.array([0.01, 0.2, 0.33])
    sup = weyl_sup_x(ts, N)
    xs = np.arange(64) * 2 * math.pi / 64
    for t, s in zip(ts, sup):
        assert np.abs(weyl_sum(xs, t, N)).max() <= s + 1e-9
    assert weyl_sup_x(0.0, N)[0] == pytest.approx(np.sum(eta1(np.arange(-16, 17) / N) ** 2))


@pytest.mark.parametrize("x1,t", [(0.0, 0.0), (1.3, 0.05), (-2.0, 0.3)])
def test_line_factor_vs_fine_trapezoid(x1, t):
    N = 4
    xi = np.linspace(-2 * N, 2 * N, 200001)
    g = np.exp(1j * (x1 * xi - t * xi * xi)) * eta1(xi / N) ** 2
    want = np.sum(g) * (xi[1] - xi[0])
    got, ok = line_factor(x1, t, N)
    assert ok and abs(complex(got) - want) < 1e-8 * max(1, abs(want))


def test_line_factor_sup_bounds_samples():
    N, t = 4, 0.1
    xs = np.linspace(-3, 3, 31)
    vals, _ = line_factor(xs, t, N)
    assert np.abs(vals).max() <= line_factor_sup(t, N) * (1 + 1e-6)


def test_kernel_window():
    assert window(0.0) == 1.0
    assert window(T_WINDOW) == 0.0
    pts = np.array([[0.5, 0.1, 0.2, 0.3], [0.5, 0.1, 0.2, 0.3]])
    k = kernel_KN(pts, np.array([T_WINDOW * 1.01, 0.01]), 4)
    assert k[0] == 0 and k[1] != 0
    with pytest.raises(ValueError):
        kernel_KN(np.zeros((2, 3)), 0.0, 4)


def test_weyl_bound_small():
    r = weyl_bound_check(16, n_t=16)
    assert r.ratios.shape == (16,) and np.isfinite(r.max_ratio)
    assert np.all(r.q <= 16)
    with pytest.raises(ValueError):
        weyl_bound_check(16, ts=[1.0])


# ---------------------------------------------------------------------------
# time resolution and the kernel split


def test_band_bumps_telescope():
    s = np.linspace(-0.6, 0.6, 4001)
    total = sum(eta_band(s, j) for j in range(0, 6)) + eta_ge(s, 6)
    assert np.allclose(total, eta_ge(s, 0), atol=1e-15)


@pytest.mark.parametrize("K", [1, 2])
def test_partition_of_unity(K, rng):
    s = rng.uniform(-1 / 16, 1 / 16, 4000)
    assert partition_error(s, K) < 1e-12


def test_ladders():
    assert ladder_K(64) == 2 and ladder_K(32) == 1 and ladder_K(127) == 2
    lo, hi = lambda_window(64, 3.7)
    assert lo == pytest.approx(64 ** (1.4 / 1.7)) and hi == 2**10 * 64**2
    for lam in np.geomspace(lo, hi, 9):
        L = level_L(64, lam, 3.7)
        v = lam**1.7 * 64**-1.4
        assert 2**L <= v * (1 + 1e-9) and v < 2 ** (L + 1)


@pytest.mark.parametrize("lam_exp,margin", [(7.0, -2), (9.0, 0), (14.0, 0)])
def test_time_weights_sum_to_one(lam_exp, margin, rng):
    N, p0 = 64, 3.7
    lam = 2.0**lam_exp
    tw = time_weights(N, lam, p0, margin=margin)
    assert not tw.trivial
    t = rng.uniform(-T_WINDOW, T_WINDOW, 3000)
    w1, w2, w3 = tw(t)
    assert tw.case == (1 if lam_exp == 7.0 else 2)
    assert np.max(np.abs(w1 + w2 + w3 - 1)) < 1e-12


def test_time_weights_validation():
    with pytest.raises(ValueError):
        time_weights(16, 10.0, 3.7)
    with pytest.raises(ValueError):
        time_weights(64, 1e12, 3.7)
    with pytest.raises(ValueError):
        time_weights(64, 100.0, 3.5)


def test_kernel_decomposition_small():
    lo, hi = lambda_window(64, 3.7)
    d = kernel_decomposition(64, 2.0**9, 3.7, n_samples=40, margin=0)
    assert d.case == 2 and not d.trivial
    assert d.sum_error <= 1e-9 and d.partition_error <= 1e-10
    assert d.quadrature_ok and np.isfinite(d.sup_K1_over_lam2)
    assert lo < 2.0**9 < hi


# ---------------------------------------------------------------------------
# superlevel sets


def test_admissible_symbol(rng):
    spec = GridSpec(1, 16, 16)
    m = admissible_symbol(spec, 4, rng)
    assert np.sum(np.abs(m) ** 2) / spec.L1 == pytest.approx(1.0)
    assert np.all(m[spec.xi_sq() > 16] == 0)
    F = free_wave(m, spec, 0.0)
    assert np.abs(F).max() <= np.sum(np.abs(m)) / spec.L1 * (1 + 1e-12)


def test_superlevel_measure_monotone_and_total(rng):
    spec = GridSpec(1, 16, 16)
    m = admissible_symbol(spec, 4, rng)
    times = np.linspace(-1e-3, 1e-3, 3)
    fields = [free_wave(m, spec, t) for t in times]
    lams = np.array([0.0, 1.0, 5.0, 20.0])
    meas, band = superlevel_measure(spec, fields, times, lams)
    assert meas[0] == pytest.approx(spec.volume * 2e-3)
    assert np.all(np.diff(meas) <= 0) and np.all(band >= 0)


def test_distributional_check_small():
    r = distributional_check(4, draws=2, n_t=3, n_lambda=4)
    assert r.monotone and r.measures.shape == (2, 4) and np.isfinite(r.max_constant)
    with pytest.raises(ValueError):
        distributional_check(4, lambdas=[1e9], draws=1)
