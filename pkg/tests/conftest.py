import numpy as np
import pytest

from brokenray import scenarios


@pytest.fixture(scope="session")
def flat():
    return scenarios.flat_annulus()


@pytest.fixture(scope="session")
def curved():
    return scenarios.neg_curved_annulus()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[k])
