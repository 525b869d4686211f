import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

# the three-example toy used throughout: two rows in group 0, one in group 1
TOY_GROUPS = np.array([0, 1, 0])
TOY_Y = np.array([
    [0.5, 0.5, 0.0],
    [1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0],
])
TOY_Y_HAT = np.array([
    [1.0, 0.5, 0.0],
    [0.5, 0.25, 0.5],
    [0.0, 0.0, 1.0],
])
TOY_Y_TILDE = np.array([
    [2 / 3, 1 / 3, 0.0],
    [2 / 5, 1 / 5, 2 / 5],
    [0.0, 0.0, 1.0],
])


@pytest.fixture
def toy():
    return TOY_Y.copy(), TOY_GROUPS.copy()


def random_instance(rng, n_max=40, l_max=4, r_max=3, hard=False):
    """Random row-stochastic labels with every group populated."""
    L = int(rng.integers(2, l_max + 1))
    R = int(rng.integers(2, r_max + 1))
    N = int(rng.integers(max(R, 4), n_max + 1))
    g = np.concatenate([np.arange(R), rng.integers(0, R, N - R)])
    rng.shuffle(g)
    if hard:
        y = np.eye(L)[rng.integers(0, L, N)]
    else:
        y = rng.dirichlet(np.ones(L) * 0.5, size=N)
    return y, g


ACCEPTANCE_RESULTS = {}


def record(criterion, passed, detail):
    """Store one acceptance outcome and echo it; the summary hook reprints them all."""
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} ({detail})"
    ACCEPTANCE_RESULTS[criterion] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[key])
