import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from saddleflow.dynamics import DynamicsParams, PowerLaw, SimState
from saddleflow.problems import example1_min_norm_saddle, example1_problem

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def ex1():
    return example1_problem()


@pytest.fixture
def origin():
    return example1_min_norm_saddle()


@pytest.fixture
def standard_state():
    return SimState(1.0, np.array([1.0, 1.5]), np.array([1.0, 1.5]), np.array([1.0, 1.0]), np.array([1.0, 1.0]))


def make_params(p=0.8, c=1.0, alpha=3.0, q=0.8, r=0.5, t0=1.0):
    return DynamicsParams(alpha, q, p, c, PowerLaw(r), t0)


def central_diff(fn, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return g


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
