import math
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spnls.grid import EuclidField, Field, GridSpec

settings.register_profile("spnls", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("spnls")

# acceptance outcomes, filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        tr.write_line(ACCEPTANCE[key])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_spec():
    return GridSpec(1, 8, 8)


@pytest.fixture
def spec16():
    return GridSpec(1, 16, 16)


def random_field(spec, rng, smooth=None):
    """Complex Gaussian field, optionally band-limited to |xi_j| <= smooth."""
    v = rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape)
    f = Field(spec, v)
    if smooth is None:
        return f
    from spnls.grid import fftn, ifftn

    c = fftn(f.values)
    keep = np.ones(spec.shape, bool)
    for a, xi in enumerate(spec.axes_xi()):
        keep &= spec.broadcast(a, np.abs(xi) <= smooth)
    return Field(spec, ifftn(c * keep))


def gaussian_bump(width=1.0, side=8 / math.pi, n4=32):
    return EuclidField.from_function(
        lambda a, b, c, d: np.exp(-(a * a + b * b + c * c + d * d) / (2 * width * width)), side, n4)


@pytest.fixture(autouse=True)
def _quiet_chart_warnings():
    from spnls.euclid import ChartWarning

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ChartWarning)
        yield
