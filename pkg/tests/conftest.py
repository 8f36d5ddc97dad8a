import numpy as np
import pytest

from ofdm_dfrc.config import desk_config, table1_config


@pytest.fixture
def table1():
    return table1_config()


@pytest.fixture
def desk():
    return desk_config()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
