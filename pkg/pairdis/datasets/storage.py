"""Dataset directories: ``images.pdt`` plus ``factors.csv``."""

from pathlib import Path
from typing import Tuple, Union

from pairdis.datasets.base import Dataset
from pairdis.errors import DimensionError, FormatError
from pairdis.exporters.tables import FactorExporter, load_factors
from pairdis.exporters.tensor import TensorExporter, load_tensor

IMAGES_FILE = "images.pdt"
FACTORS_FILE = "factors.csv"


def save_dataset(dataset: Dataset, directory: Union[str, Path]) -> Tuple[Path, Path]:
    """
    Write a dataset's images and factors.

    Returns:
        Paths of the image tensor and the factor CSV.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    images, factors = directory / IMAGES_FILE, directory / FACTORS_FILE
    TensorExporter().export(dataset.images, str(images))
    FactorExporter().export(dataset.factors, str(factors))
    return images, factors


def load_dataset(directory: Union[str, Path], name: str = "") -> Dataset:
    """Read a directory written by :func:`save_dataset`."""
    directory = Path(directory)
    if not (directory / IMAGES_FILE).is_file():
        raise FormatError(f"{directory}: no {IMAGES_FILE}")
    images = load_tensor(directory / IMAGES_FILE)
    if images.ndim != 3:
        raise FormatError(f"{directory / IMAGES_FILE}: expected [n, h, w] images, got {images.shape}")
    factors = load_factors(directory / FACTORS_FILE)
    try:
        return Dataset(name or directory.name, images, factors)
    except DimensionError as e:
        raise FormatError(f"{directory}: {e}") from e
