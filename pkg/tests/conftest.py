import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # expose tests/oracles.py

from hawkesfield import (
    FiringRate,
    InitialCondition,
    ModelParams,
    RngContract,
    SpatialMeasure,
    SynapticWeight,
)


@pytest.fixture
def rng():
    return RngContract(20240817)


@pytest.fixture
def interacting_params():
    """Small excitatory network with genuine spatial structure."""
    return ModelParams(
        FiringRate.rectified_linear(1.0, 0.8),
        SynapticWeight.gaussian(0.6, 0.7),
        InitialCondition.gaussian_bump(1.0, [0.0], 0.5),
        1.0,
        SpatialMeasure.uniform_box(1, 1.0),
    )


@pytest.fixture
def flat_params():
    """Space-free dynamics: constant weight and initial condition."""
    return ModelParams(
        FiringRate.rectified_linear(1.0, 1.0),
        SynapticWeight.constant(0.5),
        InitialCondition.constant(0.5),
        1.0,
        SpatialMeasure.uniform_box(1, 1.0),
    )


@pytest.fixture
def noninteracting_params():
    return ModelParams(
        FiringRate.sigmoid(2.0, 1.5, 0.0),
        SynapticWeight.constant(0.0),
        InitialCondition.gaussian_bump(1.0, [0.0], 0.5),
        0.8,
        SpatialMeasure.uniform_box(1, 1.0),
    )


@pytest.fixture
def line_positions():
    return np.linspace(-0.8, 0.8, 5).reshape(-1, 1)
