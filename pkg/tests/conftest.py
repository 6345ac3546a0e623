import numpy as np
import pytest

from normnls.functionals import ProblemParams, StatePair, retract
from normnls.grid import RadialGrid


@pytest.fixture(scope="session")
def grid():
    return RadialGrid(20.0, 1000)


def gaussian_pair(grid, beta=-0.5, a=4.0, wu=1.0, wv=1.6, shift=0.0):
    r = grid.nodes
    u = np.exp(-(r / wu) ** 2)
    v = np.exp(-((r - shift) / wv) ** 2)
    return retract(StatePair.from_arrays(grid, u, v, ProblemParams.symmetric(a, beta)))


@pytest.fixture
def pair(grid):
    return gaussian_pair(grid)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
