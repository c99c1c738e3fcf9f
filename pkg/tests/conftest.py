import numpy as np
import pytest

from mswt.models import ModelConfig, SolverConfig
from mswt.network import init_parameters


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def tiny_config():
    """8x8 grid, no patching, two scales; small enough to overfit quickly."""
    return ModelConfig(
        height=8, width=8, in_channels=3, out_channels=1, patch_size=1,
        scales=2, widths=(8, 16), window=2, heads=2,
    ).validate()


@pytest.fixture
def check_config():
    """The configuration the gradient checks run on."""
    return ModelConfig(
        height=16, width=16, in_channels=3, out_channels=1, patch_size=2,
        scales=2, widths=(16, 32), window=2, heads=2,
    ).validate()


@pytest.fixture
def check_params(check_config):
    return init_parameters(check_config, seed=7)


@pytest.fixture
def solver_config():
    return SolverConfig(grid=32, reynolds=500.0, dt=0.5 / 32 / 4, snapshot_interval=0.5 / 32, horizon=5)
