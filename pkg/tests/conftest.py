import numpy as np
import pytest
from hypothesis import settings

from lss.game import Game

settings.register_profile("lss", deadline=None, max_examples=60)
settings.load_profile("lss")


@pytest.fixture
def counterexample():
    return Game.counterexample()


@pytest.fixture
def toy2d():
    return Game.toy2d()


def complex_step_grad(cost, z, h=1e-30):
    """Gradient of an analytic cost by the complex-step rule (no subtraction error)."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    for i in range(z.size):
        zc = z.astype(complex)
        zc[i] += 1j * h
        out[i] = np.imag(cost(zc)) / h
    return out


def fd_matrix(fn, z, h=1e-6):
    """Central-difference Jacobian of a vector function."""
    z = np.asarray(z, dtype=float)
    cols = []
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        cols.append((np.asarray(fn(z + e)) - np.asarray(fn(z - e))) / (2 * h))
    return np.array(cols).T


# (criterion, line) pairs from the acceptance suite, echoed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES, key=lambda item: item[0]):
            terminalreporter.write_line(line)
