import abc
import importlib
from typing import Any, Dict, List, Tuple

from voxcascade.config.settings import NETWORKS
from voxcascade.nn.layers import ActivationShape, LayerRow, Module
from voxcascade.nn.tensor import Tensor


class BaseNetwork(Module, metaclass=abc.ABCMeta):
    # Name under which the class is registered in NETWORKS.
    family: str = None

    def __init__(self):
        super().__init__()

    @property
    @abc.abstractmethod
    def config(self) -> Dict[str, Any]:
        """
        JSON-serializable keyword arguments that rebuild this network (parameters aside).
        """
        pass

    @property
    @abc.abstractmethod
    def in_channels(self) -> int:
        pass

    @abc.abstractmethod
    def check_input(self, shape: Tuple[int, ...]) -> None:
        """
        Raises GeometryError when a (batch, channel, z, y, x) input does not fit the network.

        :param shape: input tensor shape.
        """
        pass

    @abc.abstractmethod
    def forward(self, x: Tensor) -> Tensor:
        pass

    @abc.abstractmethod
    def describe(self, shape: ActivationShape) -> Tuple[List[LayerRow], ActivationShape]:
        pass

    @property
    def valid_margin(self) -> int:
        """
        Border, in output voxels, contaminated by padding. Zero unless the network pads.
        """
        return 0


def get_network(family: str = "lr_unet") -> type:
    """
    Given a network family it returns the network class registered for it.

    :param family: family name, a key of NETWORKS.
    :return: the BaseNetwork subclass implementing that family.
    """
    try:
        path, network_class_name = NETWORKS[family]
        network_module = importlib.import_module(path)
        network_class = getattr(network_module, network_class_name)
        return network_class
    except (ImportError, KeyError):
        raise TypeError(f"Unsupported network family supplied: {family!r}.")
