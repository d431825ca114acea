import numpy as np
import pytest

from invdes_cli.model import ModelHyper, init_model_params
from invdes_cli.physics import DatasetConfig, generate_trajectory
from invdes_cli.util import set_quiet


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def quiet_console():
    set_quiet(True)
    yield
    set_quiet(False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_hyper():
    return ModelHyper(width=8, blocks=1)


@pytest.fixture
def small_params(small_hyper):
    return init_model_params(small_hyper, seed=3)


@pytest.fixture
def tiny_dataset_config():
    return DatasetConfig(particles_range=(8, 14), num_steps=6)


@pytest.fixture
def tiny_trajectories(tiny_dataset_config):
    return [generate_trajectory(11, i, tiny_dataset_config) for i in range(3)]
