from dataclasses import dataclass
from typing import Iterator, List, Tuple

import numpy as np

import voxcascade.nn.functional as F
from voxcascade.config.settings import INIT_STD, INSTANCE_NORM_EPS
from voxcascade.nn.tensor import Tensor

# (channels, z, y, x) of one batch item.
ActivationShape = Tuple[int, int, int, int]


@dataclass(frozen=True)
class LayerRow:
    """
    One output tensor of a network: what the memory model sums and the summary prints.
    """
    name: str
    channels: int
    spatial: Tuple[int, int, int]
    params: int

    @property
    def scalars(self) -> int:
        return self.channels * int(np.prod(self.spatial))


class Module:
    def __init__(self):
        self.training = True

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def describe(self, shape: ActivationShape) -> Tuple[List[LayerRow], ActivationShape]:
        """
        Layer rows produced by one forward pass on an input of `shape`, and the output shape.
        """
        raise NotImplementedError

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def children(self) -> Iterator["Module"]:
        for value in vars(self).values():
            if isinstance(value, Module):
                yield value
            elif isinstance(value, (list, tuple)):
                yield from (v for v in value if isinstance(v, Module))

    def parameters(self) -> List[Tensor]:
        """
        Trainable tensors in declaration order, which is also the checkpoint order.
        """
        params = []
        for value in vars(self).values():
            if isinstance(value, Tensor) and value.requires_grad:
                params.append(value)
            elif isinstance(value, Module):
                params.extend(value.parameters())
            elif isinstance(value, (list, tuple)):
                for v in value:
                    if isinstance(v, Module):
                        params.extend(v.parameters())
        return params

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.parameters())


def _parameter(data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True)


class Conv3d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: int, stride: int = 1, padding: int = 0,
                 pad_mode: str = "zeros", rng: np.random.Generator = None, dtype=np.float32, name: str = "conv"):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.weight = _parameter(rng.normal(0, INIT_STD, (out_channels, in_channels, kernel, kernel, kernel))
                                 .astype(dtype))
        self.bias = _parameter(np.zeros(out_channels, dtype=dtype))
        self.stride, self.padding, self.pad_mode, self.name = stride, padding, pad_mode, name

    def forward(self, x: Tensor) -> Tensor:
        return F.conv3d(x, self.weight, self.bias, self.stride, self.padding, self.pad_mode)

    def describe(self, shape):
        rows = []
        channels, *spatial = shape
        if self.padding:
            spatial = [n + 2 * self.padding for n in spatial]
            rows.append(LayerRow(f"{self.name}.pad", channels, tuple(spatial), 0))
        k = self.weight.shape[2]
        spatial = tuple((n - k) // self.stride + 1 for n in spatial)
        out_channels = self.weight.shape[0]
        rows.append(LayerRow(self.name, out_channels, spatial, self.parameter_count()))
        return rows, (out_channels, *spatial)


class ConvTranspose3d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: int, stride: int = 1, padding: int = 0,
                 rng: np.random.Generator = None, dtype=np.float32, name: str = "convT"):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.weight = _parameter(rng.normal(0, INIT_STD, (in_channels, out_channels, kernel, kernel, kernel))
                                 .astype(dtype))
        self.bias = _parameter(np.zeros(out_channels, dtype=dtype))
        self.stride, self.padding, self.name = stride, padding, name

    def forward(self, x: Tensor) -> Tensor:
        return F.conv3d_transpose(x, self.weight, self.bias, self.stride, self.padding)

    def describe(self, shape):
        k = self.weight.shape[2]
        spatial = tuple((n - 1) * self.stride + k - 2 * self.padding for n in shape[1:])
        out_channels = self.weight.shape[1]
        return [LayerRow(self.name, out_channels, spatial, self.parameter_count())], (out_channels, *spatial)


class InstanceNorm3d(Module):
    def __init__(self, channels: int, eps: float = INSTANCE_NORM_EPS, dtype=np.float32, name: str = "norm"):
        super().__init__()
        self.gamma = _parameter(np.ones(channels, dtype=dtype))
        self.beta = _parameter(np.zeros(channels, dtype=dtype))
        self.eps, self.name = eps, name

    def forward(self, x: Tensor) -> Tensor:
        return F.instance_norm(x, self.gamma, self.beta, self.eps)

    def describe(self, shape):
        return [LayerRow(self.name, shape[0], tuple(shape[1:]), self.parameter_count())], shape


class Activation(Module):
    """
    Parameter-free elementwise layer.
    """
    def __init__(self, kind: str, alpha: float = 0.0):
        super().__init__()
        self.kind, self.alpha, self.name = kind, alpha, kind

    def forward(self, x: Tensor) -> Tensor:
        if self.kind == "leaky_relu":
            return F.leaky_relu(x, self.alpha)
        if self.kind == "relu":
            return F.relu(x)
        if self.kind == "tanh":
            return F.tanh(x)
        if self.kind == "sigmoid":
            return F.sigmoid(x)
        raise ValueError(f"Unknown activation {self.kind!r}")

    def describe(self, shape):
        return [LayerRow(self.name, shape[0], tuple(shape[1:]), 0)], shape


class Dropout(Module):
    def __init__(self, p: float, rng: np.random.Generator = None, name: str = "dropout"):
        super().__init__()
        self.p, self.name = p, name
        self.rng = rng or np.random.default_rng(0)

    def forward(self, x: Tensor) -> Tensor:
        return F.dropout(x, self.p, self.rng, self.training)

    def describe(self, shape):
        return [LayerRow(self.name, shape[0], tuple(shape[1:]), 0)], shape


class Sequential(Module):
    def __init__(self, *layers: Module):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    def describe(self, shape):
        rows = []
        for layer in self.layers:
            layer_rows, shape = layer.describe(shape)
            rows.extend(layer_rows)
        return rows, shape
