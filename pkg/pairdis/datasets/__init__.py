"""Synthetic datasets and similarity-label fabrication."""

from pairdis.datasets.base import Dataset, FactorTable, LabelGenConfig
from pairdis.datasets.labels import (
    angular_difference,
    inject_noise,
    make_binary_labels,
    make_labels,
    make_rbf_labels,
    pair_count,
)
from pairdis.datasets.storage import load_dataset, save_dataset
from pairdis.datasets.synthetic import gen_synthetic

__all__ = [
    "Dataset",
    "FactorTable",
    "LabelGenConfig",
    "angular_difference",
    "gen_synthetic",
    "inject_noise",
    "load_dataset",
    "make_binary_labels",
    "make_labels",
    "make_rbf_labels",
    "pair_count",
    "save_dataset",
]
