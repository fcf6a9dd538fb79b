import numpy as np
import pytest

from sparse_rwre.env import (
    Beta,
    Constant,
    Deterministic,
    EnvSpec,
    Independent,
    LogitOfLogNormalRho,
    UniformInt,
)


def simple_spec(m=1, lam=2 / 3):
    return EnvSpec(Deterministic(m), Constant(lam), Independent())


def lognormal_spec(mean, var=1.0, m=1):
    return EnvSpec(Deterministic(m), LogitOfLogNormalRho(mean, var), Independent())


@pytest.fixture
def ladder_spec():
    """xi = 1, lambda = 2/3: the nearest-neighbour walk with speed 1/3."""
    return simple_spec()


@pytest.fixture
def mixed_spec():
    return EnvSpec(UniformInt(3), Beta(4, 2), Independent())


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))


ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail):
    line = f"CRITERION {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
