import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


class ScalarLinearObs:
    """Scalar test sensor ``g(x) = x[0]`` with constant variance; sensor rows are ignored."""

    period = None

    def __init__(self, r=1.0):
        self.r = r

    def evaluate(self, states, sensors):
        states = np.atleast_2d(states)
        m = np.atleast_2d(sensors).shape[0]
        g = np.repeat(states[:, :1], m, axis=1)
        grad = np.zeros(g.shape + (states.shape[1],))
        grad[..., 0] = 1.0
        return g, grad, np.full(g.shape, self.r)


@pytest.fixture
def scalar_obs():
    return ScalarLinearObs()


# acceptance criterion -> (passed, detail); filled by test_acceptance, printed after the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
