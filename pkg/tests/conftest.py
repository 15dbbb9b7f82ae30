import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from vardp import ControlAffineModel, QuadraticCost  # noqa: E402


def random_spd(rng, n, lo=0.5):
    M = rng.standard_normal((n, n))
    return M @ M.T + lo * np.eye(n)


def sin_model(b=1.0, c=0.01, **kw):
    """x' = sin(x) + b u + noise, scalar."""
    return ControlAffineModel(
        1, 1, drift=np.sin, jacobian=lambda x: np.cos(x).reshape(1, 1),
        hessian=lambda x: -np.sin(x).reshape(1, 1, 1), inputB=[[b]], noiseC=[[c]],
        is_odd=True, name="sin", **kw)


def scalar_cost(q=1.0, r=1.0, pK=1.0, horizon=1, reference=None):
    return QuadraticCost([[q]], [[r]], [[pK]], horizon, reference=reference)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def record_acceptance(line):
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
