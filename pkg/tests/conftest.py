import numpy as np
import pytest

from rtm.dataset import FeatureMatrix, LabelSet


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_problem(seed, k, n, C):
    """Gaussian features with every class present at least once."""
    r = np.random.default_rng(seed)
    Z = r.standard_normal((k, n))
    ids = np.concatenate([np.arange(C), r.integers(0, C, n - C)]) if n >= C else r.integers(0, C, n)
    r.shuffle(ids)
    return FeatureMatrix(Z), LabelSet(ids, max(C, 2))


@pytest.fixture
def problem():
    return random_problem


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
