import numpy as np
import pytest

from src.gp_core import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def smooth_data(rng):
    x = np.sort(rng.uniform(0.0, 1.0, 15))
    y = np.sin(2.0 * np.pi * x) + 0.1 * rng.standard_normal(15)
    return Dataset(x, y)


@pytest.fixture
def xsinx_data(rng):
    x = np.linspace(0.0, 10.0, 60)
    y = x * np.sin(x) / 10.0 + 0.1 * rng.standard_normal(60)
    return Dataset(x, y)


@pytest.fixture
def hetero_data(rng):
    x = np.sort(rng.uniform(0.0, 1.0, 20))
    obs_sd = rng.uniform(0.05, 0.3, 20)
    y = np.cos(3.0 * x) + obs_sd * rng.standard_normal(20)
    return Dataset(x, y, obs_sd)
