import numpy as np
import pytest

from artifact.spectral import TorusGrid


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid2():
    return TorusGrid(2, 16)


@pytest.fixture
def grid1():
    return TorusGrid(1, 32)


def plane_wave(grid, xi):
    """cos(xi . x) sampled on the grid."""
    return np.cos(np.einsum("i,i...->...", np.asarray(xi, dtype=float), grid.x))


def perturbed_pair(grid, eps, codim=1, seed=3):
    """Constraint-satisfying pair near the flat plane, with a random displacement and tilt."""
    from artifact.evolution import pair_from_perturbation
    rng = np.random.default_rng(seed)
    n1 = grid.dim + 1 + codim
    disp = eps * grid.random_field(rng, (n1,), band=3)
    disp[0] = 0.0
    tilt = eps * grid.random_field(rng, (n1,), band=3)
    return pair_from_perturbation(grid, disp, tilt)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
