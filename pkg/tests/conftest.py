import numpy as np
import pytest

from fracplane.fracops import FracParams, assemble_operator
from fracplane.geometry import Domain, Grid


@pytest.fixture(scope="session")
def interval():
    return Domain.interval()


@pytest.fixture(scope="session")
def grid64(interval):
    return Grid.build(interval, 1 / 64)


@pytest.fixture(scope="session")
def half():
    return FracParams(1, 0.5)


@pytest.fixture(scope="session")
def op64(grid64, interval, half):
    return assemble_operator(grid64, interval, half)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria: one line per criterion in the terminal summary
ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(n, ok, detail=""):
        ACCEPTANCE[n] = (bool(ok), detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
