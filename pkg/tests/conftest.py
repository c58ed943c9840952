import logging

import numpy as np
import pytest

from src import kernels
from src.model import ModelConfig, build
from src.monitoring.logging_handler import LoggingHandler
from src.persistence.dataset import SceneSpec, generate_synthetic_dataset

# smallest input the 64-pixel encoder alignment allows without padding
SMALL_SIZE = (64, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def single_thread():
    kernels.set_num_threads(1)
    yield
    kernels.set_num_threads(1)


@pytest.fixture(autouse=True)
def detach_log_handlers():
    """Drop handlers the CLI installs so later tests never write to a closed capture stream"""
    yield
    package_logger = logging.getLogger("src")
    for handler in LoggingHandler._installed:
        package_logger.removeHandler(handler)
        handler.close()
    LoggingHandler._installed = []
    package_logger.propagate = True


@pytest.fixture
def xxs_config():
    return ModelConfig.preset("xxs", input_size=SMALL_SIZE)


@pytest.fixture
def xxs_model(xxs_config):
    return build(xxs_config, seed=7)


@pytest.fixture
def synthetic_dataset(tmp_path):
    """Three random scenes at 64x48 with 16-bit PNG depth"""
    out = tmp_path / "synthetic"
    generate_synthetic_dataset(3, seed=5, out_dir=out, size=(48, 64))
    return out / "manifest.yaml"


@pytest.fixture
def plane_dataset(tmp_path):
    """Two fronto-parallel planes at 2.5 m"""
    out = tmp_path / "plane"
    scenes = [SceneSpec("plane", 2.5, 2.5)] * 2
    generate_synthetic_dataset(2, seed=0, out_dir=out, size=(48, 64), scenes=scenes)
    return out / "manifest.yaml"
