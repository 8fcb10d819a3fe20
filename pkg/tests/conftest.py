import numpy as np
import pytest

from harmonic_riccati import hcre


@pytest.fixture
def scalar():
    return hcre.scalar_example()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
