"""Factor-labelled image datasets and label-generation settings."""

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from pairdis.errors import ContractError, DimensionError

FactorKind = Literal["discrete", "cyclic"]


@dataclass(frozen=True)
class FactorTable:
    """Ground-truth factor value per instance (never shown to the encoder)."""

    kind: FactorKind
    """``discrete`` class ids or ``cyclic`` angles in degrees."""
    values: np.ndarray
    """Class id in 0..K-1, or angle in [0, 360)."""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.kind == "discrete":
            if np.any(values < 0) or np.any(values != np.round(values)):
                raise ContractError("discrete factors must be nonnegative integers")
        elif self.kind == "cyclic":
            if np.any(values < 0.0) or np.any(values >= 360.0):
                raise ContractError("cyclic factors must lie in [0, 360)")
        else:
            raise ContractError(f"unknown factor kind '{self.kind}'")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def classes(self) -> np.ndarray:
        """Integer view of discrete factors."""
        return self.values.astype(np.int64)

    def subset(self, index: np.ndarray) -> "FactorTable":
        return FactorTable(self.kind, self.values[index])


@dataclass(frozen=True)
class LabelGenConfig:
    """How similarity labels are fabricated from factors."""

    proportion: float = 1e-4
    """Fraction of all N(N-1)/2 unordered pairs that get a label."""
    rbf_sigma: float = 30.0
    """Bandwidth (degrees) of the RBF similarity for cyclic factors."""
    noise_gamma: float = 0.0
    """Flip probability (binary) or Gaussian noise variance (real)."""
    kind: Literal["binary", "real"] = "binary"
    """Label kind to produce."""
    seed: int = 0
    """Seed of the pair sampling and noise streams."""

    def __post_init__(self):
        if not 0.0 < self.proportion <= 1.0:
            raise ContractError(f"proportion must lie in (0, 1], got {self.proportion}")
        if not self.rbf_sigma > 0.0:
            raise ContractError(f"rbf_sigma must be positive, got {self.rbf_sigma}")
        if self.noise_gamma < 0.0:
            raise ContractError(f"noise_gamma must be >= 0, got {self.noise_gamma}")
        if self.kind not in ("binary", "real"):
            raise ContractError(f"unknown label kind '{self.kind}'")


@dataclass
class Dataset:
    """Images with their ground-truth factor."""

    name: str
    """Generator name (``blobs`` or ``bars``) or a user label."""
    images: np.ndarray
    """[n, height, width] intensities in [0, 1]."""
    factors: FactorTable
    """Factor of interest for each image."""
    seed: Optional[int] = None
    """Generation seed, when synthetic."""

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim != 3:
            raise DimensionError(f"images must be [n, h, w], got shape {self.images.shape}")
        if len(self.factors) != self.images.shape[0]:
            raise DimensionError(
                f"{self.images.shape[0]} images but {len(self.factors)} factor values"
            )

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def flat(self) -> np.ndarray:
        """[n, pixels] view of the images."""
        return self.images.reshape(len(self), -1)

    def subset(self, index: np.ndarray) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.name, self.images[index], self.factors.subset(index), self.seed)
