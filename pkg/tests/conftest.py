"""Shared fixtures for the pairdis test suite."""

import numpy as np
import pytest
import torch

from pairdis.datasets import gen_synthetic
from pairdis.models import PairwiseVAE
from pairdis.models.base import ModelConfig


def pytest_addoption(parser):
    parser.addoption(
        "--runslow",
        action="store_true",
        default=False,
        help="Also run the long end-to-end training checks.",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def toy_config() -> ModelConfig:
    return ModelConfig.preset("toy")


@pytest.fixture
def toy_model(toy_config) -> PairwiseVAE:
    return PairwiseVAE(toy_config, seed=0)


@pytest.fixture
def toy_images() -> torch.Tensor:
    rng = np.random.default_rng(0)
    return torch.as_tensor(rng.uniform(size=(6, 4)), dtype=torch.float64)


@pytest.fixture
def small_config() -> ModelConfig:
    """16x16 images with a narrow network, quick enough for training tests."""
    return ModelConfig(d_u=2, d_v=2, hidden_sizes=(16,))


@pytest.fixture
def blobs_small():
    return gen_synthetic("blobs", 60, seed=3)


@pytest.fixture
def bars_small():
    return gen_synthetic("bars", 60, seed=3)
