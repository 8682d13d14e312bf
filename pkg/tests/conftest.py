import numpy as np
import pytest
from hypothesis import settings

from diffpnp.schedule import make_linear_beta_schedule

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(scope="session")
def schedule():
    return make_linear_beta_schedule()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def mc_close(samples, expected, n_se=4.0):
    """Assert a sample mean is within ``n_se`` Monte Carlo standard errors."""
    samples = np.asarray(samples, dtype=float)
    se = samples.std(ddof=1) / np.sqrt(samples.size)
    assert abs(samples.mean() - expected) <= n_se * se, (samples.mean(), expected, se)


_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record and print one acceptance line; returns whether the criterion passed."""

    def record(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
