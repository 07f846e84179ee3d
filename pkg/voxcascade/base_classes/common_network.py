import abc
from typing import Any, Dict, List

import numpy as np

from voxcascade.base_classes.base_network import BaseNetwork
from voxcascade.exceptions import GeometryError
from voxcascade.nn.layers import LayerRow
from voxcascade.nn.tensor import Tensor


class CommonNetwork(BaseNetwork, metaclass=abc.ABCMeta):
    # Every family shares the same config handling, input validation and summary,
    # so they live here and each family only defines its layers.

    def __init__(self, seed: int = 0, dtype: str = "float32", **config):
        super().__init__()
        self._config = {"seed": seed, "dtype": dtype, **config}
        self.dtype = np.dtype(dtype)
        self.rng = np.random.default_rng(seed)

    @property
    def config(self) -> Dict[str, Any]:
        return dict(self._config)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 5:
            raise GeometryError(f"{self.family} expects a (batch, channel, z, y, x) input, got shape {x.shape}")
        if x.shape[1] != self.in_channels:
            raise GeometryError(f"{self.family} expects {self.in_channels} input channels, got {x.shape[1]}")
        self.check_input(x.shape)
        return self.forward(x)

    def summary(self, side: int) -> List[LayerRow]:
        """
        Layer rows of one forward pass on a cube of the given side.

        :param side: input side length, in voxels.
        :return: one row per produced tensor, in execution order.
        """
        rows, _ = self.describe((self.in_channels, side, side, side))
        return rows

    def output_side(self, side: int) -> int:
        _, shape = self.describe((self.in_channels, side, side, side))
        return shape[1]

    def _check_cube(self, shape, divisor: int, minimum: int) -> None:
        spatial = shape[2:]
        if len(set(spatial)) != 1 or spatial[0] % divisor or spatial[0] < minimum:
            raise GeometryError(f"{self.family} expects a cube with side a multiple of {divisor} "
                                f"and at least {minimum}, got {tuple(spatial)}")
