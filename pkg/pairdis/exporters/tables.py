"""CSV exporters for factors, pairs, loss histories, metrics, sweeps and cross-validation."""

import csv
import dataclasses
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Union

import numpy as np

from pairdis.errors import FormatError
from pairdis.exporters.base import Exporter


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class TableExporter(Exporter):
    """Writes rows (mappings or dataclass instances) under a fixed header."""

    columns: Sequence[str] = ()

    def get_file_extension(self) -> str:
        """Get the file extension."""
        return ".csv"

    def _row(self, row: Any) -> Dict[str, Any]:
        if dataclasses.is_dataclass(row):
            row = dataclasses.asdict(row)
        if not isinstance(row, Mapping):
            raise TypeError(f"cannot export row of type {type(row).__name__}")
        return {c: row[c] for c in self.columns}

    def export(self, obj: Iterable[Any], path: str) -> None:
        """Export rows as CSV."""
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(self.columns)
            for row in obj:
                values = self._row(row)
                writer.writerow([_cell(values[c]) for c in self.columns])


class LossHistoryExporter(TableExporter):
    """Per-epoch training terms."""

    columns = ("epoch", "recon_term", "pair_term", "kl_u", "kl_v", "total")


class MetricsExporter(TableExporter):
    """Evaluation report rows."""

    columns = ("metric", "dataset", "seed", "value")


class SweepExporter(TableExporter):
    """Long-format sweep results."""

    columns = ("model", "param", "param_value", "seed", "metric", "value")


class CrossValExporter(TableExporter):
    """Beta cross-validation table."""

    columns = ("beta", "mean_log_likelihood")


class FactorExporter(TableExporter):
    """Ground-truth factor per instance; accepts a ``FactorTable``."""

    columns = ("index", "kind", "value")

    def export(self, obj: Any, path: str) -> None:
        """Export a factor table as CSV."""
        rows = (
            {"index": k, "kind": obj.kind, "value": int(v) if obj.kind == "discrete" else float(v)}
            for k, v in enumerate(obj.values)
        )
        super().export(rows, path)


class PairExporter(TableExporter):
    """Similarity labels; accepts a ``PairBatch``."""

    columns = ("i", "j", "y")

    def export(self, obj: Any, path: str) -> None:
        """Export a pair batch as CSV."""
        rows = (
            {"i": int(i), "j": int(j), "y": float(y)}
            for i, j, y in zip(obj.i_idx, obj.j_idx, obj.y)
        )
        super().export(rows, path)


def read_table(path: Union[str, Path], columns: Sequence[str]) -> List[Dict[str, str]]:
    """
    Read a CSV written by a :class:`TableExporter`.

    Args:
        path: File to read.
        columns: Required header, in order.

    Returns:
        Rows as string dictionaries.
    """
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != tuple(columns):
            raise FormatError(f"{path}: expected header {','.join(columns)}, found {header}")
        rows = []
        for line_no, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(columns):
                raise FormatError(f"{path}:{line_no}: expected {len(columns)} fields")
            rows.append(dict(zip(columns, record)))
    return rows


def load_factors(path: Union[str, Path]):
    """Read a factor CSV into a ``FactorTable``."""
    from pairdis.datasets.base import FactorTable

    rows = read_table(path, FactorExporter.columns)
    if not rows:
        raise FormatError(f"{path}: no factors")
    kinds = {r["kind"] for r in rows}
    if len(kinds) != 1:
        raise FormatError(f"{path}: mixed factor kinds {sorted(kinds)}")
    if [int(r["index"]) for r in rows] != list(range(len(rows))):
        raise FormatError(f"{path}: indices must be 0..n-1 in order")
    kind = kinds.pop()
    try:
        values = np.array([float(r["value"]) for r in rows])
    except ValueError as e:
        raise FormatError(f"{path}: non-numeric factor value") from e
    return FactorTable(kind=kind, values=values)


def load_pairs(path: Union[str, Path]):
    """Read a pair CSV into a ``PairBatch``."""
    from pairdis.similarity import PairBatch

    rows = read_table(path, PairExporter.columns)
    try:
        return PairBatch(
            np.array([int(r["i"]) for r in rows], dtype=np.int64),
            np.array([int(r["j"]) for r in rows], dtype=np.int64),
            np.array([float(r["y"]) for r in rows], dtype=np.float64),
        )
    except ValueError as e:
        raise FormatError(f"{path}: malformed pair row ({e})") from e
