import numpy as np
import pytest

from fracground.grid_spectral import FracLapOperator, make_grid
from fracground.model import ProblemParams, make_potential
from fracground.solver import SolverConfig, ground_state_constant


@pytest.fixture(scope="session")
def grid_1d():
    return make_grid(1, 2048, 32.0)


@pytest.fixture(scope="session")
def op_05(grid_1d):
    return FracLapOperator(grid_1d, 0.5)


@pytest.fixture(scope="session")
def params_const(grid_1d):
    return ProblemParams(
        dim=1, s=0.5, p=3.0, eps=0.0, x0=np.zeros(1),
        potential=make_potential("constant", (1.0,)),
    )


@pytest.fixture(scope="session")
def gs_lam1(grid_1d):
    """Refined radial ground state for V = 1, N = 1, s = 0.5, p = 3."""
    res = ground_state_constant(1.0, 1, 0.5, 3.0, grid_1d, SolverConfig(refine=True))
    assert res.converged
    return res
