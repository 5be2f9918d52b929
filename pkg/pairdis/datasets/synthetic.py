"""Desk-scale synthetic image datasets with one known factor of interest.

``blobs``: a 3x3 bright square at one of 10 grid positions (discrete factor),
with brightness and 1-pixel position jitter as nuisance factors.

``bars``: a line through the image centre at an angle in [0, 360) (cyclic
factor), with thickness and brightness as nuisance factors. Angles t and
t + 180 draw the same line.
"""

import logging
from typing import Callable, Dict, Tuple

import numpy as np

from pairdis.datasets.base import Dataset, FactorTable
from pairdis.errors import ContractError

logger = logging.getLogger(__name__)

IMAGE_SIZE = 16
BLOB_ROWS = (4, 11)
BLOB_COLS = (2, 5, 8, 11, 14)
BLOB_CENTERS = np.array([(r, c) for r in BLOB_ROWS for c in BLOB_COLS], dtype=np.int64)
NUM_BLOB_CLASSES = len(BLOB_CENTERS)
BRIGHTNESS_RANGE = (0.6, 1.0)


def _blobs(n: int, rng: np.random.Generator) -> Tuple[np.ndarray, FactorTable]:
    t = rng.integers(0, NUM_BLOB_CLASSES, size=n)
    brightness = rng.uniform(*BRIGHTNESS_RANGE, size=n)
    # the whole 3x3 square stays inside the image
    centers = np.clip(BLOB_CENTERS[t] + rng.integers(-1, 2, size=(n, 2)), 1, IMAGE_SIZE - 2)
    images = np.zeros((n, IMAGE_SIZE, IMAGE_SIZE))
    index = np.arange(n)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            images[index, centers[:, 0] + dr, centers[:, 1] + dc] = brightness
    return images, FactorTable("discrete", t)


def bar_images(t: np.ndarray, thickness: np.ndarray, brightness: np.ndarray) -> np.ndarray:
    """
    Render anti-aliased lines through the image centre.

    Args:
        t: [n] angles in degrees.
        thickness: [n] line widths in pixels.
        brightness: [n] peak intensities.

    Returns:
        [n, 16, 16] images; pixel coverage falls off linearly over one pixel
        from the line's edge.
    """
    coords = np.arange(IMAGE_SIZE) + 0.5 - IMAGE_SIZE / 2.0
    x = coords[None, None, :]
    y = -coords[None, :, None]
    theta = np.deg2rad(np.asarray(t, dtype=np.float64))[:, None, None]
    dist = np.abs(x * np.sin(theta) - y * np.cos(theta))
    coverage = np.clip(np.asarray(thickness, dtype=np.float64)[:, None, None] / 2.0 + 0.5 - dist, 0.0, 1.0)
    return np.asarray(brightness, dtype=np.float64)[:, None, None] * coverage


def _bars(n: int, rng: np.random.Generator) -> Tuple[np.ndarray, FactorTable]:
    t = rng.uniform(0.0, 360.0, size=n)
    thickness = rng.integers(1, 3, size=n).astype(np.float64)
    brightness = rng.uniform(*BRIGHTNESS_RANGE, size=n)
    return bar_images(t, thickness, brightness), FactorTable("cyclic", t)


GENERATORS: Dict[str, Callable[[int, np.random.Generator], Tuple[np.ndarray, FactorTable]]] = {
    "blobs": _blobs,
    "bars": _bars,
}


def gen_synthetic(name: str, n: int, seed: int = 0) -> Dataset:
    """
    Generate a synthetic dataset.

    Args:
        name: "blobs" or "bars".
        n: Number of images (at least 2).
        seed: Seed; equal seeds give identical datasets.

    Returns:
        Dataset with [n, 16, 16] images in [0, 1] and their factor table.
    """
    if name not in GENERATORS:
        raise ContractError(f"Unknown dataset: {name}. Choose from: {list(GENERATORS)}")
    if n < 2:
        raise ContractError(f"a dataset needs at least 2 images, got {n}")
    images, factors = GENERATORS[name](int(n), np.random.default_rng(seed))
    logger.debug("generated %d %s images with seed %s", n, name, seed)
    return Dataset(name=name, images=images, factors=factors, seed=seed)
