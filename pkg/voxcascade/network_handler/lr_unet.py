from typing import List, Tuple

from voxcascade.base_classes.common_network import CommonNetwork
from voxcascade.config.settings import (DEFAULT_LR_SIDE, LEAKY_SLOPE,
                                        LR_BASE_CHANNELS, LR_DROPOUT,
                                        LR_LEVELS)
from voxcascade.exceptions import GeometryError
from voxcascade.nn.functional import concat
from voxcascade.nn.layers import (Activation, Conv3d, ConvTranspose3d,
                                  Dropout, InstanceNorm3d, LayerRow,
                                  Sequential)
from voxcascade.nn.tensor import Tensor


class LRUNetGenerator(CommonNetwork):
    """
    Whole-volume generator of scale 0: a U-Net reading the sketch at twice the output side.

    The stem is strided, so a (1, 2L, 2L, 2L) sketch gives a (1, L, L, L) volume in [0, 1].
    Levels below the stem halve the side and double the channels; the decoder mirrors them
    with transposed convolutions and concatenated skips, with dropout on its two innermost
    blocks standing in for a noise input.
    """
    family = "lr_unet"

    def __init__(self, lr_side: int = DEFAULT_LR_SIDE, base_channels: int = LR_BASE_CHANNELS,
                 levels: int = LR_LEVELS, dropout: float = LR_DROPOUT, zero_head: bool = False,
                 in_channels: int = 1, **kwargs):
        super().__init__(lr_side=lr_side, base_channels=base_channels, levels=levels, dropout=dropout,
                         zero_head=zero_head, in_channels=in_channels, **kwargs)
        if levels < 2 or lr_side % 2 ** (levels - 1) or lr_side < 2 ** levels:
            raise GeometryError(f"lr_side {lr_side} cannot be halved {levels - 1} times down to a side of 2 or more")
        self.lr_side = lr_side
        self._in_channels = in_channels
        channels = [base_channels * 2 ** j for j in range(levels)]
        layer = dict(rng=self.rng, dtype=self.dtype)

        self.stem = Sequential(Conv3d(in_channels, channels[0], 4, 2, 1, name="stem", **layer),
                               Activation("leaky_relu", LEAKY_SLOPE))
        self.encoders = [
            Sequential(Conv3d(channels[j - 1], channels[j], 4, 2, 1, name=f"enc{j}", **layer),
                       InstanceNorm3d(channels[j], dtype=self.dtype, name=f"enc{j}.norm"),
                       Activation("leaky_relu", LEAKY_SLOPE))
            for j in range(1, levels)
        ]
        self.decoders = []
        for t, j in enumerate(range(levels - 2, -1, -1)):
            cin = channels[j + 1] if t == 0 else 2 * channels[j + 1]
            block = [ConvTranspose3d(cin, channels[j], 4, 2, 1, name=f"dec{j}", **layer),
                     InstanceNorm3d(channels[j], dtype=self.dtype, name=f"dec{j}.norm")]
            if t < 2 and dropout > 0:
                block.append(Dropout(dropout, self.rng, name=f"dec{j}.dropout"))
            block.append(Activation("relu"))
            self.decoders.append(Sequential(*block))
        self.head = Conv3d(2 * channels[0], 1, 3, 1, 1, "replicate", name="head", **layer)
        self.output = Activation("sigmoid")
        if zero_head:
            self.head.weight.data[...] = 0
            self.head.bias.data[...] = 0

    @property
    def in_channels(self) -> int:
        return self._in_channels

    def check_input(self, shape) -> None:
        self._check_cube(shape, 1, 1)
        if shape[2] != 2 * self.lr_side:
            raise GeometryError(f"lr_unet expects a sketch of side {2 * self.lr_side}, got {shape[2]}")

    def forward(self, x: Tensor) -> Tensor:
        h = self.stem(x)
        skips = [h]
        for encoder in self.encoders:
            h = encoder(h)
            skips.append(h)
        for t, decoder in enumerate(self.decoders):
            h = concat([decoder(h), skips[-2 - t]])
        return self.output(self.head(h))

    def describe(self, shape) -> Tuple[List[LayerRow], tuple]:
        rows, shape = self.stem.describe(shape)
        skips = [shape]
        for encoder in self.encoders:
            layer_rows, shape = encoder.describe(shape)
            rows.extend(layer_rows)
            skips.append(shape)
        for t, decoder in enumerate(self.decoders):
            layer_rows, shape = decoder.describe(shape)
            rows.extend(layer_rows)
            skip = skips[-2 - t]
            shape = (shape[0] + skip[0], *shape[1:])
            rows.append(LayerRow(f"skip{len(self.decoders) - 1 - t}", shape[0], tuple(shape[1:]), 0))
        for layer in (self.head, self.output):
            layer_rows, shape = layer.describe(shape)
            rows.extend(layer_rows)
        return rows, shape
