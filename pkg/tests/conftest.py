import math
import warnings
from dataclasses import replace

import pytest

from oclaser.model.params import LaserParams, with_pump_ratio, scale_coupling
from oclaser.model.fock import FockGrid
from oclaser.utils.errors import PhysicsWarning


@pytest.fixture(autouse=True)
def quiet_physics_warnings():
    # the standard parameter set has a damping matrix that is not positive semidefinite
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PhysicsWarning)
        yield


@pytest.fixture
def reference_params() -> LaserParams:
    return LaserParams(g1=0.05, g2=0.07, delta=3.0, gamma11=6.0, gamma22=5.0, gamma12=5.5)


@pytest.fixture
def symmetric_params(reference_params) -> LaserParams:
    """gamma11 = gamma22 and gamma12 = 0: the beta mode decouples (C3 = 0)."""
    return replace(reference_params, gamma11=6.0, gamma22=6.0, gamma12=0.0)


@pytest.fixture
def oracle_params(reference_params) -> LaserParams:
    return with_pump_ratio(scale_coupling(reference_params, 0.1), 1.2)


@pytest.fixture
def linewidth_params() -> LaserParams:
    g = math.sqrt(1.25e-5)
    return LaserParams(g1=g, g2=g, delta=0.0, gamma11=6.0, gamma22=6.0, gamma12=0.0)


@pytest.fixture
def small_grid() -> FockGrid:
    return FockGrid(12, 4)
