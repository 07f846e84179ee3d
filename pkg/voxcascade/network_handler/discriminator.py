from voxcascade.base_classes.common_network import CommonNetwork
from voxcascade.config.settings import (D_BASE_CHANNELS, D_LAYERS,
                                        LEAKY_SLOPE)
from voxcascade.nn.layers import (Activation, Conv3d, InstanceNorm3d,
                                  Sequential)
from voxcascade.nn.tensor import Tensor


class PatchDiscriminator(CommonNetwork):
    """
    Fully convolutional discriminator returning a map of patch scores in (0, 1).

    Each of the `layers` blocks halves the side, so a 32^3 input is scored on a 2^3 grid
    with the defaults. Scale 0 reads (sketch, volume), higher scales
    (sketch patch, previous-scale patch, patch).
    """
    family = "discriminator"

    def __init__(self, in_channels: int = 2, base_channels: int = D_BASE_CHANNELS, layers: int = D_LAYERS, **kwargs):
        super().__init__(in_channels=in_channels, base_channels=base_channels, layers=layers, **kwargs)
        self._in_channels = in_channels
        self.n_layers = layers
        blocks, cin = [], in_channels
        for i in range(layers):
            cout = base_channels * 2 ** i
            blocks.append(Conv3d(cin, cout, 4, 2, 1, rng=self.rng, dtype=self.dtype, name=f"block{i}"))
            if i > 0:
                blocks.append(InstanceNorm3d(cout, dtype=self.dtype, name=f"block{i}.norm"))
            blocks.append(Activation("leaky_relu", LEAKY_SLOPE))
            cin = cout
        blocks.append(Conv3d(cin, 1, 3, 1, 1, rng=self.rng, dtype=self.dtype, name="score"))
        blocks.append(Activation("sigmoid"))
        self.net = Sequential(*blocks)

    @property
    def in_channels(self) -> int:
        return self._in_channels

    def check_input(self, shape) -> None:
        self._check_cube(shape, 2 ** self.n_layers, 2 ** self.n_layers)

    def forward(self, x: Tensor) -> Tensor:
        return self.net(x)

    def describe(self, shape):
        return self.net.describe(shape)
