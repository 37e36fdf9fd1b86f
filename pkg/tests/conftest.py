import numpy as np
import pytest

from src.algorithms.model import ModelConfig, build_model


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the long end-to-end checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long end-to-end checks, enabled with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return ModelConfig(d_model=16, n_layers=2, n_heads=4, max_window=64)


@pytest.fixture
def tiny_model(tiny_config):
    return build_model(tiny_config, seed=0).eval()
