import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spnls.euclid import ResolutionError
from spnls.grid import Field, GridSpec, read_field
from spnls.norms import Trajectory, h1_norm, l2_norm
from spnls.solver import (NumericalAbort, SmallnessViolated, SolveConfig, blowup_monitor, check_conservation,
                          duhamel_residual, equation_residual, evolve, picard_solve, stability_experiment,
                          write_trajectory)

from conftest import random_field

SPEC = GridSpec(2, 16, 8)


def plane(spec, A, k):
    x = spec.axes_x()
    v = A * np.ones(spec.shape, complex)
    for a in range(4):
        v = v * spec.broadcast(a, np.exp(1j * k[a] * x[a]))
    return Field(spec, v)


def smooth_data(seed, scale=0.05, spec=SPEC):
    f = random_field(spec, np.random.default_rng(seed), smooth=1.5)
    return f * (scale / h1_norm(f))


@pytest.mark.parametrize("k", [(0, 0, 0, 0), (0.5, 1, -1, 0), (1, 0, 0, 2)])
def test_plane_wave_is_exact(k):
    A = 0.5
    f = plane(SPEC, A, k)
    u = evolve(f, 0.2, SolveConfig(dt=1e-2))
    k2 = sum(x * x for x in k)
    for i, t in enumerate(u.times):
        want = f.values * np.exp(-1j * (k2 + A * A) * t)
        assert np.max(np.abs(u.data[i] - want)) < 1e-12


def test_config_validation():
    for kw in ({"dt": 0}, {"tol": -1}, {"max_iter": 0}, {"record_stride": 0}, {"scheme": "rk4"}):
        with pytest.raises(ValueError):
            SolveConfig(**kw)


def test_resolution_check():
    spec = GridSpec(1, 8, 8)
    f = plane(spec, 1.0, (3, 0, 0, 0))
    with pytest.raises(ResolutionError):
        evolve(f, 0.01)


@given(st.integers(0, 2**31 - 1), st.floats(0, 2 * math.pi))
def test_gauge_covariance(seed, theta):
    f = smooth_data(seed, 0.5)
    cfg = SolveConfig(dt=0.01)
    a = evolve(f, 0.05, cfg)
    b = evolve(f * np.exp(1j * theta), 0.05, cfg)
    assert np.allclose(b.data, a.data * np.exp(1j * theta), atol=1e-13)


@given(st.integers(0, 2**31 - 1), st.integers(0, 15), st.integers(0, 7))
def test_translation_covariance(seed, s1, s2):
    f = smooth_data(seed, 0.5)
    cfg = SolveConfig(dt=0.01)
    a = evolve(f, 0.05, cfg)
    g = Field(SPEC, np.roll(f.values, (s1, s2), axis=(0, 2)))
    b = evolve(g, 0.05, cfg)
    assert np.allclose(b.data, np.roll(a.data, (s1, s2), axis=(1, 3)), atol=1e-13)


@given(st.integers(0, 2**31 - 1))
def test_time_reversal(seed):
    f = smooth_data(seed, 0.5)
    cfg = SolveConfig(dt=0.01)
    fwd = evolve(f, 0.1, cfg)
    back = evolve(fwd.field(len(fwd) - 1), -0.1, cfg, t0=0.1)
    assert back.times[0] == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(back.data[0], f.values, atol=1e-12)
    # conjugation symmetry of the negative-time branch
    neg = evolve(f, -0.1, cfg)
    pos = evolve(f.conj(), 0.1, cfg)
    assert np.allclose(neg.data[::-1], np.conj(pos.data), atol=1e-14)


def test_mass_conserved_and_energy_second_order():
    f = smooth_data(3, 1.0)
    drifts = []
    for dt in (4e-3, 2e-3):
        u = evolve(f, 0.2, SolveConfig(dt=dt, record_stride=10))
        tab = check_conservation(u)
        assert tab.mass_drift < 1e-12
        drifts.append(tab.energy_drift)
    assert 3.0 <= drifts[0] / drifts[1] <= 5.0


def test_linear_flow_when_rho_zero():
    f = smooth_data(1, 0.5)
    u = evolve(f, 0.3, SolveConfig(dt=0.05, rho=0.0))
    from spnls.spectral import propagate

    assert np.allclose(u.data[-1], propagate(f, 0.3).values, atol=1e-13)


def test_picard_zero_data():
    traj, diag = picard_solve(SPEC.zeros(), (0, 0.1), SolveConfig(dt=0.01, scheme="picard"))
    assert diag.converged and np.all(traj.data == 0)


def test_picard_agrees_with_split_step():
    f = smooth_data(5, 0.2)
    traj, diag = picard_solve(f, (0, 0.1), SolveConfig(dt=1e-3, scheme="picard", tol=1e-12))
    assert diag.converged
    assert diag.residual < 1e-12
    u = evolve(f, 0.1, SolveConfig(dt=1e-3))
    rel = max(h1_norm(Field(SPEC, traj.data[i] - u.data[i])) for i in range(len(u))) / h1_norm(f)
    assert rel < 1e-5
    assert duhamel_residual(traj, f) < 1e-12


def test_picard_interval_checks():
    with pytest.raises(ValueError):
        picard_solve(SPEC.zeros(), (0, 2))
    with pytest.raises(ValueError):
        picard_solve(SPEC.zeros(), (1, 0))


def test_picard_reports_large_data():
    f = smooth_data(2, 60.0)
    with pytest.raises((SmallnessViolated, NumericalAbort)):
        picard_solve(f, (0, 1.0), SolveConfig(dt=0.05, scheme="picard", max_iter=8))


def test_equation_residual_of_plane_wave():
    f = plane(SPEC, 0.5, (0.5, 1, 0, 0))
    u = evolve(f, 0.05, SolveConfig(dt=1e-3))
    e = equation_residual(u)
    # second-order differences of an exact phase rotation
    assert np.max(np.abs(e.data[1:-1])) < 1e-5 * np.max(np.abs(u.data))


def test_stability_linear_in_data_gap():
    base_f = smooth_data(7, 0.5)
    cfg = SolveConfig(dt=1e-2)
    base = evolve(base_f, 0.2, SolveConfig(dt=1e-2, record_stride=5))
    zero = Trajectory(SPEC, base.times, np.zeros_like(base.data), base.dt)
    direction = smooth_data(8, 1.0)
    amps = []
    for eps in (1e-2, 1e-3, 1e-4):
        r = stability_experiment(base, zero, base_f + direction * eps, cfg)
        assert r.forcing == 0
        assert r.data_gap == pytest.approx(eps, rel=1e-9)
        amps.append(r.deviation / eps)
    slope = np.polyfit(np.log([1e-2, 1e-3, 1e-4]), np.log(np.array(amps) * [1e-2, 1e-3, 1e-4]), 1)[0]
    assert abs(slope - 1) < 0.05


def test_blowup_monitor_flat_for_small_data():
    f = smooth_data(9, 0.1)
    u = evolve(f, 0.5, SolveConfig(dt=0.01, record_stride=5))
    rep = blowup_monitor(u, pieces=4)
    assert len(rep.intervals) == 4 and not rep.growing


def test_write_trajectory(tmp_path):
    f = smooth_data(11, 0.2)
    u = evolve(f, 0.02, SolveConfig(dt=0.01))
    d = write_trajectory(u, tmp_path / "traj")
    lines = (d / "times.csv").read_text().splitlines()
    assert lines[0] == "step,t,M,E" and len(lines) == len(u) + 1
    g, t = read_field(d / "u_00002.spn", return_time=True)
    assert t == pytest.approx(0.02) and np.array_equal(g.values, u.data[2])
    assert l2_norm(g) == pytest.approx(l2_norm(f), rel=1e-12)
