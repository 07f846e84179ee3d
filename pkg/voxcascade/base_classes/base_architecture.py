import abc
import importlib
from typing import List

from voxcascade.config.settings import ARCHITECTURES
from voxcascade.exceptions import GeometryError
from voxcascade.nn.layers import LayerRow


class BaseArchitecture(metaclass=abc.ABCMeta):
    """
    A GAN as the memory model sees it: the layer rows of one generator and one
    discriminator pass, and the image volumes held next to them.
    """
    # Name under which the class is registered in ARCHITECTURES.
    arch_id: str = None
    minimum_side: int = 32

    def check_side(self, side: int) -> None:
        if side < self.minimum_side or side & (side - 1):
            raise GeometryError(f"{self.arch_id} needs a power-of-two side of at least {self.minimum_side}, "
                                f"got {side}")

    @abc.abstractmethod
    def generator_rows(self, side: int) -> List[LayerRow]:
        """
        Output tensors of one generator forward pass producing a volume of the given side.

        :param side: image side length, in voxels.
        :return: one row per output tensor, in execution order.
        """
        pass

    @abc.abstractmethod
    def discriminator_rows(self, side: int) -> List[LayerRow]:
        pass

    @abc.abstractmethod
    def image_scalars(self, side: int) -> int:
        """
        Scalars of the input, generated and real volumes of one training step.
        """
        pass


def get_architecture(arch_id: str = "lr64") -> type:
    """
    Given an architecture id it returns the class registered for it.

    :param arch_id: architecture id, a key of ARCHITECTURES.
    :return: the BaseArchitecture subclass implementing it.
    """
    try:
        path, architecture_class_name = ARCHITECTURES[arch_id]
        architecture_module = importlib.import_module(path)
        architecture_class = getattr(architecture_module, architecture_class_name)
        return architecture_class
    except (ImportError, KeyError):
        raise TypeError(f"Unsupported architecture supplied: {arch_id!r}.")
