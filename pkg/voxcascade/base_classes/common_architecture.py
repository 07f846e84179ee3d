import abc
from typing import List

from voxcascade.base_classes.base_architecture import BaseArchitecture
from voxcascade.nn.layers import LayerRow


class LayerWalk:
    """
    Symbolic forward pass: tracks the (channels, side) of a cube through a layer list
    and records one row per output tensor, without allocating anything.
    """
    def __init__(self, channels: int, side: int, prefix: str = ""):
        self.channels = channels
        self.side = side
        self.prefix = prefix
        self.rows: List[LayerRow] = []

    def _emit(self, name: str, params: int = 0) -> "LayerWalk":
        self.rows.append(LayerRow(f"{self.prefix}{name}", self.channels, (self.side,) * 3, params))
        return self

    def input(self, name: str = "input") -> "LayerWalk":
        return self._emit(name)

    def conv(self, name: str, out_channels: int, kernel: int, stride: int = 1, padding: int = None) -> "LayerWalk":
        padding = (kernel - 1) // 2 if padding is None else padding
        params = self.channels * out_channels * kernel ** 3 + out_channels
        self.channels = out_channels
        self.side = (self.side + 2 * padding - kernel) // stride + 1
        return self._emit(name, params)

    def conv_transpose(self, name: str, out_channels: int, kernel: int, stride: int, padding: int) -> "LayerWalk":
        params = self.channels * out_channels * kernel ** 3 + out_channels
        self.channels = out_channels
        self.side = (self.side - 1) * stride + kernel - 2 * padding
        return self._emit(name, params)

    def norm(self, name: str) -> "LayerWalk":
        return self._emit(name, 2 * self.channels)

    def act(self, name: str) -> "LayerWalk":
        return self._emit(name)

    def upsample(self, name: str) -> "LayerWalk":
        self.side *= 2
        return self._emit(name)

    def pool(self, name: str) -> "LayerWalk":
        self.side //= 2
        return self._emit(name)

    def concat(self, name: str, channels: int) -> "LayerWalk":
        self.channels += channels
        return self._emit(name)


class CommonArchitecture(BaseArchitecture, metaclass=abc.ABCMeta):
    # Baselines hold one input volume, the generated one and the real one.

    def image_scalars(self, side: int) -> int:
        return 3 * side ** 3

    @staticmethod
    def ladder(side: int, start: int = 4) -> List[int]:
        """
        Sides from `start` up to `side`, doubling.
        """
        sides = [start]
        while sides[-1] < side:
            sides.append(sides[-1] * 2)
        return sides
