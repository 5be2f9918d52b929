"""Fully connected networks expressed with the tape primitives."""

import math
from collections import OrderedDict
from typing import Dict, Sequence

import torch

from pairdis import autodiff as ad
from pairdis.autodiff import Tensor
from pairdis.errors import DimensionError


def glorot_uniform(fan_in: int, fan_out: int, generator: torch.Generator) -> Tensor:
    """Weights uniform in +-sqrt(6 / (fan_in + fan_out))."""
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    u = torch.rand((fan_in, fan_out), generator=generator, dtype=ad.DTYPE)
    return ad.parameter(u * (2.0 * limit) - limit)


class MLP:
    """
    Stack of affine layers with ReLU between them and a linear output.

    Parameters live in ``self.parameters`` under ``<name>.<layer>.weight`` and
    ``<name>.<layer>.bias``; weights are [fan_in, fan_out] so a layer is
    ``x @ W + b``.
    """

    def __init__(self, name: str, sizes: Sequence[int], generator: torch.Generator):
        """
        Initialize the network.

        Args:
            name: Prefix for parameter names.
            sizes: Layer widths from input to output (at least two entries).
            generator: Random stream for the weight initialization.
        """
        if len(sizes) < 2:
            raise DimensionError("an MLP needs an input and an output width")
        self.name = name
        self.sizes = [int(s) for s in sizes]
        self.parameters: Dict[str, Tensor] = OrderedDict()
        for layer, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            self.parameters[f"{name}.{layer}.weight"] = glorot_uniform(fan_in, fan_out, generator)
            self.parameters[f"{name}.{layer}.bias"] = ad.parameter(torch.zeros(fan_out, dtype=ad.DTYPE))

    @property
    def num_layers(self) -> int:
        return len(self.sizes) - 1

    def __call__(self, x: Tensor) -> Tensor:
        if x.dim() != 2 or x.shape[1] != self.sizes[0]:
            raise DimensionError(
                f"{self.name}: expected [batch, {self.sizes[0]}] input, got {tuple(x.shape)}"
            )
        h = x
        for layer in range(self.num_layers):
            h = ad.add(
                ad.matmul(h, self.parameters[f"{self.name}.{layer}.weight"]),
                self.parameters[f"{self.name}.{layer}.bias"],
            )
            if layer < self.num_layers - 1:
                h = ad.relu(h)
        return h
