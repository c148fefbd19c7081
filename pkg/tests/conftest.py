from __future__ import annotations

import numpy as np
import pytest

from rdm_dynamics import DensityMatrix, SpatialGrid, gaussian, pure_density
from rdm_dynamics.influence import DetectorArray


def packet_density(
    grid: SpatialGrid, center: float = 0.0, sigma: float = 1.0, momentum: float = 0.0
) -> DensityMatrix:
    """Pure Gaussian state ``psi psi*`` on ``grid``."""
    return pure_density(gaussian(grid, center, sigma, momentum))


def max_abs(a: object, b: object) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def eight_elements(gain: float) -> DetectorArray:
    """Eight adjacent elements of width 3 covering ``[-12, 12]``."""
    centers = [-10.5 + 3.0 * k for k in range(8)]
    return DetectorArray.uniform(centers, width=3.0, gain=gain)


@pytest.fixture
def grid() -> SpatialGrid:
    return SpatialGrid(128, -20.0, 20.0)


@pytest.fixture
def detector_grid() -> SpatialGrid:
    return SpatialGrid(128, -16.0, 16.0)


@pytest.fixture
def packet(grid: SpatialGrid) -> DensityMatrix:
    return packet_density(grid)
