from typing import List

from voxcascade.base_classes.common_architecture import (CommonArchitecture,
                                                         LayerWalk)
from voxcascade.config.settings import LATENT_SIZE, PGGAN_FEATURE_MAPS
from voxcascade.nn.layers import LayerRow


class PGGAN3D(CommonArchitecture):
    """
    Volumetric progressive GAN, fully grown to the target side: two 3^3 convolutions per
    stage with pixel norm in the generator, mirrored blocks with average pooling and a
    minibatch-stddev head in the discriminator.
    """
    arch_id = "pggan3d"

    def __init__(self, feature_maps: int = PGGAN_FEATURE_MAPS, latent: int = LATENT_SIZE):
        self.feature_maps = feature_maps
        self.latent = latent

    def generator_rows(self, side: int) -> List[LayerRow]:
        f = self.feature_maps
        walk = LayerWalk(self.latent, 1, "G.").input("latent").act("latent.pixnorm")
        walk.conv_transpose("init", f, 4, 1, 0).act("init.lrelu").act("init.pixnorm")
        walk.conv("init.conv", f, 3).act("init.conv.lrelu").act("init.conv.pixnorm")
        for s in self.ladder(side)[1:]:
            walk.upsample(f"up{s}")
            for j in (1, 2):
                walk.conv(f"stage{s}.conv{j}", f, 3).act(f"stage{s}.lrelu{j}").act(f"stage{s}.pixnorm{j}")
        return walk.conv("to_rgb", 1, 1).rows

    def discriminator_rows(self, side: int) -> List[LayerRow]:
        f = self.feature_maps
        walk = LayerWalk(1, side, "D.").input("image")
        walk.conv("from_rgb", f, 1).act("from_rgb.lrelu")
        while walk.side > 4:
            s = walk.side
            for j in (1, 2):
                walk.conv(f"stage{s}.conv{j}", f, 3).act(f"stage{s}.lrelu{j}")
            walk.pool(f"stage{s}.pool")
        walk.concat("mbstd", 1)
        walk.conv("final.conv", f, 3).act("final.lrelu")
        walk.conv("final.dense", f, 4, 1, 0).act("final.dense.lrelu")
        return walk.conv("score", 1, 1).rows

    def image_scalars(self, side: int) -> int:
        return self.latent + 2 * side ** 3
