import numpy as np
import pytest

from cpsim.hilbert import SpatialGrid
from cpsim.operators import build_grw_family, grw_gaussian


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def line_grid():
    # spacing r_C / 2, extent 16 r_C with r_C = 1
    return SpatialGrid.line(33, 0.5)


@pytest.fixture
def grw_family(line_grid):
    return build_grw_family(line_grid, grw_gaussian(1.0))
