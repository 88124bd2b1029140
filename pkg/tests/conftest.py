import numpy as np
import pytest

from poison_scan import EmbeddingMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def line4():
    """1-D points {0, 1, 2, 10}."""
    return EmbeddingMatrix(np.array([[0.0], [1.0], [2.0], [10.0]]))


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
