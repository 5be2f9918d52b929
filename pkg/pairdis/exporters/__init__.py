"""Artifact file formats."""

from pairdis.exporters.base import Exporter
from pairdis.exporters.pgm import PGMExporter
from pairdis.exporters.tables import (
    CrossValExporter,
    FactorExporter,
    LossHistoryExporter,
    MetricsExporter,
    PairExporter,
    SweepExporter,
    TableExporter,
    load_factors,
    load_pairs,
    read_table,
)
from pairdis.exporters.tensor import TensorExporter, load_tensor

__all__ = [
    "CrossValExporter",
    "Exporter",
    "FactorExporter",
    "LossHistoryExporter",
    "MetricsExporter",
    "PGMExporter",
    "PairExporter",
    "SweepExporter",
    "TableExporter",
    "TensorExporter",
    "load_factors",
    "load_pairs",
    "load_tensor",
    "read_table",
]
