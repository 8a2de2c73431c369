import numpy as np
import pytest

from qtrack.lti_system import system1, system2
from qtrack.oracle import gain_from_H, model_value_iteration
from qtrack.qstructure import H_to_weights, build_pattern


class Solved:
    def __init__(self, model, cost, N=10):
        self.model, self.cost, self.N = model, cost, N
        self.H, self.trace = model_value_iteration(model.A, model.B, cost.Q, cost.R, cost.gamma, N)
        self.L = gain_from_H(self.H, model.n, model.m, N)
        self.pattern = build_pattern(model.n, model.m, N, cost.Q)
        self.w_star = H_to_weights(self.H, self.pattern)


@pytest.fixture(scope="session")
def sys1():
    return Solved(*system1())


@pytest.fixture(scope="session")
def sys2():
    return Solved(*system2())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_controllable(rng, n, m):
    from qtrack.lti_system import PlantModel, is_controllable

    while True:
        A = rng.normal(size=(n, n)) * 0.6
        B = rng.normal(size=(n, m))
        if is_controllable(A, B):
            return PlantModel(A, B)


@pytest.fixture
def make_plant():
    return random_controllable


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """record(number, title, ok, detail): one pass/fail line per criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(number, title, ok, detail=""):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
