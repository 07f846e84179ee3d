from dataclasses import replace
from functools import lru_cache
from typing import List

from voxcascade.base_classes.base_architecture import BaseArchitecture
from voxcascade.base_classes.base_network import get_network
from voxcascade.config.settings import DEFAULT_LR_SIDE, DEFAULT_PATCH_SIDE
from voxcascade.nn.layers import LayerRow


@lru_cache(maxsize=None)
def _summary(family: str, side: int, **config) -> List[LayerRow]:
    return get_network(family)(**config).summary(side)


def _prefixed(rows: List[LayerRow], prefix: str) -> List[LayerRow]:
    return [replace(row, name=f"{prefix}{row.name}") for row in rows]


class LowResolution64(BaseArchitecture):
    """
    The whole-volume GAN of scale 0, read off the real networks. The final image side only
    decides how many HR scales follow, so every report is the same.
    """
    arch_id = "lr64"
    minimum_side = 64

    def __init__(self, lr_side: int = DEFAULT_LR_SIDE):
        self.lr_side = lr_side

    def generator_rows(self, side: int) -> List[LayerRow]:
        return _prefixed(_summary("lr_unet", 2 * self.lr_side, lr_side=self.lr_side), "G.")

    def discriminator_rows(self, side: int) -> List[LayerRow]:
        return _prefixed(_summary("discriminator", self.lr_side, in_channels=2), "D.")

    def image_scalars(self, side: int) -> int:
        # 2x sketch, generated and real volume
        return (2 * self.lr_side) ** 3 + 2 * self.lr_side ** 3


class HighResolution32(BaseArchitecture):
    """
    One patch GAN of the scales above 0.
    """
    arch_id = "hr32"
    minimum_side = 64

    def __init__(self, patch_side: int = DEFAULT_PATCH_SIDE):
        self.patch_side = patch_side

    def generator_rows(self, side: int) -> List[LayerRow]:
        return _prefixed(_summary("hr_resnet", self.patch_side, patch_side=self.patch_side), "G.")

    def discriminator_rows(self, side: int) -> List[LayerRow]:
        return _prefixed(_summary("discriminator", self.patch_side, in_channels=3), "D.")

    def image_scalars(self, side: int) -> int:
        # sketch and previous-scale patch, generated and real patch
        return 4 * self.patch_side ** 3
