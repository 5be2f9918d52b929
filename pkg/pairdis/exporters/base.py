"""Base interface for artifact exporters."""

from abc import ABC, abstractmethod
from typing import Any


class Exporter(ABC):
    """Abstract base class for file format exporters."""

    @abstractmethod
    def export(self, obj: Any, path: str) -> None:
        """
        Write an object to a file.

        Args:
            obj: The value to export.
            path: Output file path.
        """
        pass

    @abstractmethod
    def get_file_extension(self) -> str:
        """Get the file extension for this exporter (e.g., '.pdt')."""
        pass
