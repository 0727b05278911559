import numpy as np
import pytest

from snapspace.snapshot import SpaceGrid, TimeGrid, assemble
from snapspace.spectral import CoefficientFamily, EigenFamily


@pytest.fixture(scope="session")
def small_dirichlet():
    """A small 1D snapshot matrix shared across tests."""
    fam = EigenFamily.dirichlet1d()
    sg = SpaceGrid.for_family(fam, 201)
    tg = TimeGrid.log(1e-4, 1.0, 300)
    return assemble(fam, CoefficientFamily.alternating_inverse_square(), sg, tg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
