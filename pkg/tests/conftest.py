import numpy as np
import pytest

from mgquant.synth import regression_fixture


@pytest.fixture(scope="session")
def fixture_layers():
    """The 8-layer 256x256 regression fixture (shared across tests)."""
    layers, calibs = regression_fixture(seed=7)
    return layers, calibs


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
