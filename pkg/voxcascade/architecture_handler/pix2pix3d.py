from typing import List

from voxcascade.base_classes.common_architecture import (CommonArchitecture,
                                                         LayerWalk)
from voxcascade.config.settings import BASELINE_CHANNELS
from voxcascade.nn.layers import LayerRow


class Pix2Pix3D(CommonArchitecture):
    """
    Volumetric Pix2Pix: a full-resolution U-Net down to 4^3 with skip connections, judged
    by a three-block PatchGAN on (source, image) pairs.
    """
    arch_id = "pix2pix3d"

    def __init__(self, channels: int = BASELINE_CHANNELS):
        self.channels = channels

    def generator_rows(self, side: int) -> List[LayerRow]:
        c = self.channels
        walk = LayerWalk(1, side, "G.").input("source")
        walk.conv("stem", c, 3).act("stem.lrelu")
        skips = []
        while walk.side > 4:
            skips.append(walk.channels)
            name = f"enc{walk.side // 2}"
            walk.conv(name, c, 4, 2, 1).norm(f"{name}.norm").act(f"{name}.lrelu")
        for skip in reversed(skips):
            name = f"dec{walk.side * 2}"
            walk.conv_transpose(name, c, 4, 2, 1).norm(f"{name}.norm").act(f"{name}.relu")
            walk.concat(f"{name}.skip", skip)
        return walk.conv("head", 1, 3).act("tanh").rows

    def discriminator_rows(self, side: int) -> List[LayerRow]:
        c = self.channels
        walk = LayerWalk(2, side, "D.").input("pair")
        walk.conv("block0", c, 4, 2, 1).act("block0.lrelu")
        for i in (1, 2):
            walk.conv(f"block{i}", c, 4, 2, 1).norm(f"block{i}.norm").act(f"block{i}.lrelu")
        return walk.conv("score", 1, 3).act("sigmoid").rows
