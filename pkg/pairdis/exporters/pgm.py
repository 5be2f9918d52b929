"""Binary PGM (P5) exporter for gray-scale images and image grids."""

from typing import Union

import numpy as np
import torch

from pairdis.errors import DimensionError
from pairdis.exporters.base import Exporter


class PGMExporter(Exporter):
    """Exports a 2-D array of intensities in [0, 1] as an 8-bit binary PGM."""

    def get_file_extension(self) -> str:
        """Get the file extension."""
        return ".pgm"

    def export(self, obj: Union[np.ndarray, torch.Tensor], path: str) -> None:
        """Export an image as PGM."""
        if isinstance(obj, torch.Tensor):
            obj = obj.detach().cpu().numpy()
        image = np.asarray(obj, dtype=np.float64)
        if image.ndim != 2:
            raise DimensionError(f"PGM export needs a 2-D image, got shape {image.shape}")
        height, width = image.shape
        pixels = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
        with open(path, "wb") as f:
            f.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
            f.write(pixels.tobytes(order="C"))
