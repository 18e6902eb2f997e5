"""
Shared fixtures: toy codebook, small network, synthetic image folders
"""
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from domain.model.network_config import NetworkConfig
from domain.model.train_config import TrainConfig
from domain.service.quantizer import QuantizerCodebook, rebalancing_weights

TOY_CENTRES = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [-10.0, 0.0], [0.0, -10.0]])


def make_codebook(centres=TOY_CENTRES, prior=None) -> QuantizerCodebook:
    centres = np.asarray(centres, dtype=np.float64)
    if prior is None:
        prior = np.full(len(centres), 1.0 / len(centres))
    return QuantizerCodebook(
        bin_centres=centres,
        grid_size=10.0,
        prior=prior,
        weights=rebalancing_weights(prior, 0.5),
    )


def small_network(**overrides) -> NetworkConfig:
    values = dict(
        input_size=(64, 64),
        base_channels=8,
        channel_schedule=(8, 16, 16, 16),
        primary_caps_dim=4,
        caps_channels=2,
        entity_caps=4,
        entity_caps_dim=4,
        num_bins=5,
    )
    values.update(overrides)
    return NetworkConfig(**values)


def synthetic_image(rng: np.random.Generator, size=64, hue=None) -> np.ndarray:
    """Smooth two-colour gradient with mild noise"""
    c0 = rng.integers(20, 236, 3) if hue is None else np.asarray(hue)
    c1 = rng.integers(20, 236, 3)
    t = np.linspace(0.0, 1.0, size)[None, :, None]
    s = np.linspace(0.0, 1.0, size)[:, None, None]
    img = (1 - t) * c0 + t * c1
    img = img * (0.7 + 0.3 * s) + rng.normal(0.0, 3.0, (size, size, 3))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def write_images(folder: Path, count: int, size=64, seed=0, prefix="img") -> Path:
    folder.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(count):
        Image.fromarray(synthetic_image(rng, size)).save(folder / f"{prefix}_{i:02d}.png")
    return folder




@pytest.fixture
def toy_codebook():
    return make_codebook()


@pytest.fixture
def tiny_config():
    return small_network()


@pytest.fixture
def tiny_train_config():
    return TrainConfig(epochs=1, batch_size=2, image_size=64, checkpoint_every=2,
                       log_every=1, seed=0, device='cpu')


@pytest.fixture
def image_folder(tmp_path):
    return write_images(tmp_path / "images", 4)


@pytest.fixture
def codebook_factory():
    return make_codebook


@pytest.fixture
def network_factory():
    return small_network


@pytest.fixture
def image_writer():
    return write_images


@pytest.fixture
def image_maker():
    return synthetic_image
