"""Latent traversals, latent exports and run summaries."""

from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple, Union

import numpy as np
import torch

from pairdis import autodiff as ad
from pairdis.datasets.base import Dataset
from pairdis.errors import ContractError, DimensionError
from pairdis.exporters.pgm import PGMExporter
from pairdis.exporters.tables import FactorExporter
from pairdis.exporters.tensor import TensorExporter
from pairdis.models.base import LatentModel
from pairdis.trainer import EpochRecord

LATENTS_FILE = "latents.pdt"
LATENT_FACTORS_FILE = "latent_factors.csv"


def traversal_grid(
    model: LatentModel,
    image: np.ndarray,
    grid_size: int = 7,
    extent: float = 3.0,
) -> np.ndarray:
    """
    Decode a lattice of z^(u) values with z^(v) held at an image's posterior mean.

    z^(u) runs over ``grid_size`` evenly spaced values in [-extent, extent]
    (prior standard deviations) per coordinate.

    Args:
        model: Trained model with d_u of 1 or 2.
        image: One image, [h, w] or flattened.
        grid_size: Values per coordinate.
        extent: Half-width of the lattice.

    Returns:
        Pixel means tiled as a [h, G*w] strip (d_u = 1) or a [G*h, G*w]
        grid (d_u = 2; rows follow the first coordinate).
    """
    cfg = model.config
    if cfg.d_u > 2:
        raise ContractError(f"traversal grids need d_u <= 2, the model has d_u={cfg.d_u}")
    if len(cfg.input_shape) != 2:
        raise DimensionError("traversal grids need 2-D images")
    if grid_size < 1:
        raise ContractError("grid_size must be >= 1")
    x = torch.as_tensor(np.asarray(image, dtype=np.float64).reshape(1, -1), dtype=ad.DTYPE)
    zv = model.posterior_mean(x)[:, cfg.d_u :]
    values = np.linspace(-extent, extent, grid_size)
    if cfg.d_u == 1:
        lattice = values.reshape(-1, 1)
        rows, cols = 1, grid_size
    else:
        lattice = np.array([(a, b) for a in values for b in values])
        rows, cols = grid_size, grid_size
    zu = torch.as_tensor(lattice, dtype=ad.DTYPE)
    with torch.no_grad():
        z = torch.cat([zu, zv.expand(zu.shape[0], -1)], dim=1)
        tiles = torch.sigmoid(model.decode(z)).numpy()
    h, w = cfg.input_shape
    tiles = tiles.reshape(rows, cols, h, w)
    return tiles.transpose(0, 2, 1, 3).reshape(rows * h, cols * w)


def save_traversal(
    model: LatentModel,
    image: np.ndarray,
    path: Union[str, Path],
    grid_size: int = 7,
    extent: float = 3.0,
) -> Path:
    """Write :func:`traversal_grid` as a binary PGM."""
    grid = traversal_grid(model, image, grid_size=grid_size, extent=extent)
    PGMExporter().export(grid, str(path))
    return Path(path)


def export_latents(model: LatentModel, dataset: Dataset, directory: Union[str, Path]) -> Tuple[Path, Path]:
    """
    Write posterior means of a dataset and its factors side by side.

    Returns:
        Paths of the [n, d_u + d_v] latent tensor and the factor CSV.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    latents, factors = directory / LATENTS_FILE, directory / LATENT_FACTORS_FILE
    TensorExporter().export(model.posterior_mean(dataset.flat), str(latents))
    FactorExporter().export(dataset.factors, str(factors))
    return latents, factors


def print_run_summary(
    history: Iterable[EpochRecord],
    metrics: Optional[Dict[str, float]] = None,
) -> None:
    """Print the first and last epoch of a loss history plus any metrics."""
    history = list(history)
    print("\nRun Summary:")
    if history:
        first, last = history[0], history[-1]
        print(f"  Epochs: {len(history)}")
        print(f"  Loss: {first.total:.4f} -> {last.total:.4f}")
        print(f"  Final terms: recon={last.recon_term:.4f} pair={last.pair_term:.4f} "
              f"kl_u={last.kl_u:.4f} kl_v={last.kl_v:.4f}")
    if metrics:
        print("  Metrics:")
        for name in sorted(metrics):
            print(f"    {name}: {metrics[name]:.4f}")
