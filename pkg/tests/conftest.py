import numpy as np
import pytest

from ionsense.model import ModelParams, preset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def setup1():
    """Intermittent configuration at the sweep default drive ratio."""
    return preset("setup1", omega_d_ratio=0.01)


@pytest.fixture(scope="session")
def setup2():
    """Resonant dark-state configuration."""
    return preset("setup2", omega_d_ratio=0.01)


@pytest.fixture(scope="session")
def twolevel():
    """Pure resonance fluorescence: three-level model with the weak drive off."""
    return ModelParams(omega_e=0.19, omega_d=0.0, gamma_g=0.95, gamma_u=0.0,
                       level_count=3)
