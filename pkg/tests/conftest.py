import numpy as np
import pytest

from ewcgan.datasets import draw_few_shot, ring_spec, apply_transform, shifted_ring_transform
from ewcgan.fisher import estimate_fisher
from ewcgan.gan import TrainConfig, pretrain


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run long oracle training runs")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def ring():
    return ring_spec(8, 2.0, 0.05)


@pytest.fixture
def shifted_ring(ring):
    return apply_transform(ring, shifted_ring_transform())


@pytest.fixture
def tiny_config():
    return TrainConfig(
        iterations=20,
        batch_size=16,
        latent_dim=2,
        g_hidden=(8,),
        d_hidden=(8,),
        checkpoint_interval=10,
        log_interval=10,
        eval_samples=64,
        seed=3,
    )


@pytest.fixture
def tiny_checkpoint(tiny_config, ring):
    return pretrain(tiny_config, ring)


@pytest.fixture
def tiny_fisher(tiny_checkpoint):
    return estimate_fisher(tiny_checkpoint, samples=32, seed=0)


@pytest.fixture
def fewshot(shifted_ring):
    return draw_few_shot(shifted_ring, 10, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
