from typing import List

from voxcascade.base_classes.common_architecture import (CommonArchitecture,
                                                         LayerWalk)
from voxcascade.config.settings import BASELINE_CHANNELS, LATENT_SIZE
from voxcascade.nn.layers import LayerRow


class DCGAN3D(CommonArchitecture):
    """
    Volumetric DCGAN: a transposed-convolution ladder from a latent vector up to the full
    cube, and the mirrored strided ladder down to a single score.
    """
    arch_id = "dcgan3d"

    def __init__(self, channels: int = BASELINE_CHANNELS, latent: int = LATENT_SIZE):
        self.channels = channels
        self.latent = latent

    def generator_rows(self, side: int) -> List[LayerRow]:
        walk = LayerWalk(self.latent, 1, "G.").input("latent")
        walk.conv_transpose("project", self.channels, 4, 1, 0).norm("project.norm").act("project.relu")
        for s in self.ladder(side)[1:]:
            walk.conv_transpose(f"up{s}", self.channels, 4, 2, 1).norm(f"up{s}.norm").act(f"up{s}.relu")
        return walk.conv("head", 1, 1).act("tanh").rows

    def discriminator_rows(self, side: int) -> List[LayerRow]:
        walk = LayerWalk(1, side, "D.").input("image")
        walk.conv("stem", self.channels, 1).act("stem.lrelu")
        while walk.side > 4:
            name = f"down{walk.side // 2}"
            walk.conv(name, self.channels, 4, 2, 1).norm(f"{name}.norm").act(f"{name}.lrelu")
        return walk.conv("score", 1, 4, 1, 0).act("sigmoid").rows

    def image_scalars(self, side: int) -> int:
        return self.latent + 2 * side ** 3
