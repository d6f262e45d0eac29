import numpy as np
import pytest

from disharmony import _accel
from disharmony.model import AuxTaskSpec, ModelConfig
from disharmony.synthsites import SiteConfig, make_site

# Lines registered by the acceptance suite, echoed in the terminal summary.
CRITERIA = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)


@pytest.fixture(params=["numba", "numpy"] if _accel.HAS_NUMBA else ["numpy"])
def backend(request):
    prev = _accel.set_backend(request.param)
    yield request.param
    _accel.set_backend(prev)


@pytest.fixture
def tiny_model():
    return ModelConfig(5, (6,), (4, 3), dropout_rate=0.5)


@pytest.fixture
def two_aux():
    return [AuxTaskSpec("sex"), AuxTaskSpec("age", "regression")]


@pytest.fixture(scope="session")
def small_site():
    return make_site(SiteConfig("small", n=60, dim=5), 11)


@pytest.fixture(scope="session")
def shifted_site():
    return make_site(SiteConfig("shifted", n=60, dim=5, shift=3.0), 11)


def rel_close(a, b, rtol=1e-4, atol=1e-7):
    a, b = np.asarray(a), np.asarray(b)
    return np.all(np.abs(a - b) <= np.maximum(rtol * np.maximum(np.abs(a), np.abs(b)), atol))
