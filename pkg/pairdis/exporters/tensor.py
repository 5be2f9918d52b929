"""PDT1 tensor container.

Layout: the magic bytes ``PDT1\\n``, a one-line JSON header
``{"dtype":"f64","shape":[...]}`` terminated by ``\\n``, then the values as
little-endian float64 in row-major order.
"""

import json
from pathlib import Path
from typing import Union

import numpy as np
import torch

from pairdis.errors import FormatError
from pairdis.exporters.base import Exporter

MAGIC = b"PDT1\n"


class TensorExporter(Exporter):
    """Exports dense arrays in the PDT1 container."""

    def get_file_extension(self) -> str:
        """Get the file extension."""
        return ".pdt"

    def export(self, obj: Union[np.ndarray, torch.Tensor], path: str) -> None:
        """Export an array as a PDT1 file."""
        if isinstance(obj, torch.Tensor):
            obj = obj.detach().cpu().numpy()
        array = np.ascontiguousarray(obj, dtype="<f8")
        header = json.dumps({"dtype": "f64", "shape": list(array.shape)}, separators=(",", ":"))
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(header.encode("ascii") + b"\n")
            f.write(array.tobytes(order="C"))


def load_tensor(path: Union[str, Path]) -> np.ndarray:
    """
    Read a PDT1 file.

    Args:
        path: File to read.

    Returns:
        float64 array with the stored shape.
    """
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise FormatError(f"{path}: not a PDT1 tensor file")
        try:
            header = json.loads(f.readline().decode("ascii"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"{path}: unreadable header") from e
        if header.get("dtype") != "f64" or not isinstance(header.get("shape"), list):
            raise FormatError(f"{path}: unsupported header {header}")
        shape = tuple(int(s) for s in header["shape"])
        payload = f.read()
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    if len(payload) != 8 * count:
        raise FormatError(f"{path}: expected {count} values, found {len(payload) // 8}")
    return np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
