import numpy as np
import pytest

from sirreg.moments import Dataset, sliced_moments, toy_dataset


def random_moments(rng, n=None, p=None, h=None):
    p = p or int(rng.integers(2, 21))
    h = h or int(rng.integers(2, 9))
    n = n or int(rng.integers(max(3 * p, 2 * h), 4 * p + 40))
    X = rng.standard_normal((n, p)) @ rng.standard_normal((p, p))
    Y = X @ rng.standard_normal(p) + rng.standard_normal(n)
    return sliced_moments(Dataset(X, Y), h)


@pytest.fixture
def toy():
    """Two slices in the plane: sigma = I, gamma = diag(0, 1), deltas (0, -1) and (0, 1)."""
    return sliced_moments(toy_dataset(), 2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
