import math
from typing import List, Tuple

from voxcascade.base_classes.common_network import CommonNetwork
from voxcascade.config.settings import (DEFAULT_PATCH_SIDE, HR_CHANNELS,
                                        HR_RES_BLOCKS,
                                        RESIDUAL_PADDING_WEIGHT)
from voxcascade.nn.functional import add
from voxcascade.nn.layers import (Activation, Conv3d, LayerRow, Module,
                                  Sequential)
from voxcascade.nn.tensor import Tensor


class ResBlock(Module):
    def __init__(self, channels: int, rng, dtype, name: str):
        super().__init__()
        self.name = name
        self.body = Sequential(
            Conv3d(channels, channels, 3, 1, 1, "replicate", rng=rng, dtype=dtype, name=f"{name}.conv1"),
            Activation("relu"),
            Conv3d(channels, channels, 3, 1, 1, "replicate", rng=rng, dtype=dtype, name=f"{name}.conv2"),
        )

    def forward(self, x: Tensor) -> Tensor:
        return add(x, self.body(x))

    def describe(self, shape):
        rows, out = self.body.describe(shape)
        rows.append(LayerRow(f"{self.name}.add", out[0], tuple(out[1:]), 0))
        return rows, out


class HRResNetGenerator(CommonNetwork):
    """
    Patch generator of the scales above 0.

    Input channels are the sketch patch and the previous-scale patch upsampled to the same
    grid; the side is kept, so a 32^3 patch comes back 32^3. There is no normalization, so
    an output voxel only depends on the inputs within 1 + 2 * res_blocks voxels of it.
    """
    family = "hr_resnet"

    def __init__(self, patch_side: int = DEFAULT_PATCH_SIDE, channels: int = HR_CHANNELS,
                 res_blocks: int = HR_RES_BLOCKS, zero_head: bool = False, in_channels: int = 2, **kwargs):
        super().__init__(patch_side=patch_side, channels=channels, res_blocks=res_blocks, zero_head=zero_head,
                         in_channels=in_channels, **kwargs)
        self.patch_side = patch_side
        self._in_channels = in_channels
        self.stem = Sequential(
            Conv3d(in_channels, channels, 3, 1, 1, "replicate", rng=self.rng, dtype=self.dtype, name="stem"),
            Activation("relu"))
        self.blocks = [ResBlock(channels, self.rng, self.dtype, f"res{i}") for i in range(res_blocks)]
        self.head = Conv3d(channels, 1, 1, rng=self.rng, dtype=self.dtype, name="head")
        self.output = Activation("sigmoid")
        if zero_head:
            self.head.weight.data[...] = 0
            self.head.bias.data[...] = 0

    @property
    def in_channels(self) -> int:
        return self._in_channels

    @property
    def valid_margin(self) -> int:
        """
        Padding depth found by walking the layers: a padded convolution outside the residual
        blocks contributes its full padding, one inside a block RESIDUAL_PADDING_WEIGHT of it.
        """
        depth = sum(layer.padding for layer in self.stem.layers if isinstance(layer, Conv3d))
        for block in self.blocks:
            depth += RESIDUAL_PADDING_WEIGHT * sum(layer.padding for layer in block.body.layers
                                                   if isinstance(layer, Conv3d))
        return int(math.ceil(depth + self.head.padding))

    def check_input(self, shape) -> None:
        self._check_cube(shape, 1, 1)

    def forward(self, x: Tensor) -> Tensor:
        h = self.stem(x)
        for block in self.blocks:
            h = block(h)
        return self.output(self.head(h))

    def describe(self, shape) -> Tuple[List[LayerRow], tuple]:
        return Sequential(self.stem, *self.blocks, self.head, self.output).describe(shape)
