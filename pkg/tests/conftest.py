import numpy as np
import pytest

from tdsvrg.mdp import Mdp, random_mdp


@pytest.fixture
def one_state():
    """phi = 1, r = 1, gamma = 0.9: theta* = 10, A = 0.1."""
    return Mdp(np.ones((1, 1)), np.ones((1, 1)), 0.9, np.ones((1, 1)), name="one")


@pytest.fixture
def flip():
    return Mdp(np.array([[0.0, 1.0], [1.0, 0.0]]), np.zeros((2, 2)), 0.5, np.eye(2), name="flip")


@pytest.fixture(scope="session")
def small_mdp():
    return random_mdp(10, 3, 4, 0.5, 0)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
