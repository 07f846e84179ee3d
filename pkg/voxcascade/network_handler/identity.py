from voxcascade.base_classes.common_network import CommonNetwork
from voxcascade.nn.functional import avg_downsample, channel
from voxcascade.nn.layers import LayerRow
from voxcascade.nn.tensor import Tensor


class IdentityGenerator(CommonNetwork):
    """
    Parameter-free stand-in generator.

    At scale 0 it returns the sketch averaged down to the output side; above it returns
    the previous-scale channel untouched, which the cascade has already upsampled.
    """
    family = "identity"

    def __init__(self, scale: int = 0, **kwargs):
        super().__init__(scale=scale, **kwargs)
        self.scale = scale

    @property
    def in_channels(self) -> int:
        return 1 if self.scale == 0 else 2

    def check_input(self, shape) -> None:
        self._check_cube(shape, 2 if self.scale == 0 else 1, 1)

    def forward(self, x: Tensor) -> Tensor:
        if self.scale == 0:
            return avg_downsample(x)
        return channel(x, 1)

    def describe(self, shape):
        side = shape[1] // 2 if self.scale == 0 else shape[1]
        return [LayerRow("identity", 1, (side, side, side), 0)], (1, side, side, side)
