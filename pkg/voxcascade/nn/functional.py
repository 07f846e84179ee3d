"""
Differentiable operations on 5-axis tensors laid out (batch, channel, z, y, x).

Every op computes its forward pass with numpy, and returns a Tensor whose
backward closure pushes exact gradients into the inputs that require them.
"""
from contextlib import contextmanager
from itertools import product
from typing import Iterator, List, Sequence, Tuple

import numpy as np
from scipy.special import expit

from voxcascade.config.settings import INSTANCE_NORM_EPS, SCORE_EPS
from voxcascade.exceptions import GeometryError
from voxcascade.nn.tensor import Tensor, as_tensor, result

SPATIAL = (2, 3, 4)
PAD_MODES = {"zeros": "constant", "replicate": "edge"}

# Open recorders of `record_branches`, innermost last.
_BRANCHES: List[List[np.ndarray]] = []


@contextmanager
def record_branches() -> Iterator[List[np.ndarray]]:
    """
    Collects, in call order, the branch masks of the piecewise ops run inside the block.

    Two evaluations with equal masks lie on the same linear piece of every kink.
    """
    branches = []
    _BRANCHES.append(branches)
    try:
        yield branches
    finally:
        _BRANCHES.pop()


def _branch(mask: np.ndarray) -> np.ndarray:
    for branches in _BRANCHES:
        branches.append(mask)
    return mask


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Tensor, b: Tensor) -> Tensor:
    def backward(grad):
        a.accumulate(_unbroadcast(grad, a.shape))
        b.accumulate(_unbroadcast(grad, b.shape))
    return result(a.data + b.data, (a, b), backward, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    def backward(grad):
        if a.requires_grad:
            a.accumulate(_unbroadcast(grad * b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(grad * a.data, b.shape))
    return result(a.data * b.data, (a, b), backward, "mul")


def total(x: Tensor) -> Tensor:
    def backward(grad):
        x.accumulate(np.broadcast_to(grad, x.shape).copy())
    return result(x.data.sum(), (x,), backward, "sum")


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(grad):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            index = [slice(None)] * grad.ndim
            index[axis] = slice(lo, hi)
            t.accumulate(grad[tuple(index)].copy())
    return result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward, "concat")


def channel(x: Tensor, index: int) -> Tensor:
    """
    One channel of a (b, c, z, y, x) tensor, kept as a 1-channel tensor.
    """
    def backward(grad):
        full = np.zeros_like(x.data)
        full[:, index:index + 1] = grad
        x.accumulate(full)
    return result(x.data[:, index:index + 1].copy(), (x,), backward, "channel")


def pad(x: Tensor, width: int, mode: str = "zeros") -> Tensor:
    """
    Pads the three spatial axes by `width` voxels on both sides.

    :param mode: "zeros" or "replicate" (edge voxels repeated outwards).
    """
    if width == 0:
        return x
    spec = [(0, 0), (0, 0)] + [(width, width)] * 3

    def backward(grad):
        for axis in SPATIAL:
            n = grad.shape[axis] - 2 * width
            inner = np.take(grad, np.arange(width, width + n), axis=axis)
            if mode == "replicate":
                # every padded voxel copied its nearest edge voxel; send its gradient back there
                inner = inner.copy()
                low = [slice(None)] * grad.ndim
                high = [slice(None)] * grad.ndim
                low[axis] = slice(0, 1)
                high[axis] = slice(n - 1, n)
                inner[tuple(low)] += np.take(grad, np.arange(0, width), axis=axis).sum(axis=axis, keepdims=True)
                inner[tuple(high)] += np.take(grad, np.arange(width + n, 2 * width + n), axis=axis)\
                    .sum(axis=axis, keepdims=True)
            grad = inner
        x.accumulate(grad)
    return result(np.pad(x.data, spec, mode=PAD_MODES[mode]), (x,), backward, f"pad-{mode}")


def _window(offset: int, stride: int, n_out: int) -> slice:
    return slice(offset, offset + stride * (n_out - 1) + 1, stride)


def _with_bias(out: np.ndarray, bias: Tensor) -> np.ndarray:
    return out if bias is None else out + bias.data.reshape(1, -1, 1, 1, 1)


def _parents(*tensors: Tensor) -> Tuple[Tensor, ...]:
    return tuple(t for t in tensors if t is not None)


def _conv_core(x: Tensor, weight: Tensor, bias: Tensor, stride: int) -> Tensor:
    k = weight.shape[2]
    out_shape = [(n - k) // stride + 1 for n in x.shape[2:]]
    offsets = list(product(range(k), repeat=3))

    def windows(a, b, c):
        return (slice(None), slice(None)) + tuple(_window(o, stride, n) for o, n in zip((a, b, c), out_shape))

    # accumulated channels-last so that tensordot needs no transposition per offset
    out = np.zeros((x.shape[0], *out_shape, weight.shape[0]), dtype=np.result_type(x.data, weight.data))
    for a, b, c in offsets:
        out += np.tensordot(x.data[windows(a, b, c)], weight.data[:, :, a, b, c], axes=([1], [1]))

    def backward(grad):
        if bias is not None:
            bias.accumulate(grad.sum(axis=(0, *SPATIAL)))
        grad_last = np.moveaxis(grad, 1, -1)
        if x.requires_grad:
            dx = np.zeros_like(x.data)
            for a, b, c in offsets:
                dx[windows(a, b, c)] += np.moveaxis(np.tensordot(grad_last, weight.data[:, :, a, b, c],
                                                                 axes=([4], [0])), -1, 1)
            x.accumulate(dx)
        if weight.requires_grad:
            dw = np.zeros_like(weight.data)
            for a, b, c in offsets:
                dw[:, :, a, b, c] = np.tensordot(grad, x.data[windows(a, b, c)], axes=([0, 2, 3, 4], [0, 2, 3, 4]))
            weight.accumulate(dw)
    out = _with_bias(np.ascontiguousarray(np.moveaxis(out, -1, 1)), bias)
    return result(out, _parents(x, weight, bias), backward, "conv3d")


def _check_conv(x: Tensor, weight: Tensor, channel_axis: int, op: str) -> None:
    if x.ndim != 5 or weight.ndim != 5:
        raise GeometryError(f"{op} expects 5-axis input and weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[channel_axis]:
        raise GeometryError(f"{op}: input has {x.shape[1]} channels but the weight expects "
                            f"{weight.shape[channel_axis]} (weight shape {weight.shape})")


def conv3d(x: Tensor, weight: Tensor, bias: Tensor = None, stride: int = 1, padding: int = 0,
           pad_mode: str = "zeros") -> Tensor:
    """
    3D cross-correlation.

    :param x: input [b, cin, z, y, x].
    :param weight: kernel [cout, cin, k, k, k].
    :param bias: [cout] or None.
    :param stride: same stride on every axis.
    :param padding: voxels padded on every side before the correlation.
    :param pad_mode: "zeros" or "replicate".
    :return: output [b, cout, (n + 2p - k) // stride + 1, ...].
    """
    _check_conv(x, weight, 1, "conv3d")
    k = weight.shape[2]
    if min(x.shape[2:]) + 2 * padding < k:
        raise GeometryError(f"conv3d: spatial shape {x.shape[2:]} with padding {padding} is smaller than kernel {k}")
    return _conv_core(pad(x, padding, pad_mode), weight, bias, stride)


def conv3d_transpose(x: Tensor, weight: Tensor, bias: Tensor = None, stride: int = 1, padding: int = 0) -> Tensor:
    """
    Adjoint of conv3d: every input voxel scatters a weighted kernel into the output.

    :param weight: kernel [cin, cout, k, k, k].
    :return: output [b, cout, (n - 1) * stride + k - 2 * padding, ...].
    """
    _check_conv(x, weight, 0, "conv3d_transpose")
    k = weight.shape[2]
    in_shape = x.shape[2:]
    full_shape = [(n - 1) * stride + k for n in in_shape]
    if min(full_shape) - 2 * padding <= 0:
        raise GeometryError(f"conv3d_transpose: padding {padding} leaves no output for input {in_shape}")
    offsets = list(product(range(k), repeat=3))
    crop = (slice(None), slice(None)) + tuple(slice(padding, n - padding) for n in full_shape)

    def windows(a, b, c):
        return (slice(None), slice(None)) + tuple(_window(o, stride, n) for o, n in zip((a, b, c), in_shape))

    full = np.zeros((x.shape[0], weight.shape[1], *full_shape), dtype=np.result_type(x.data, weight.data))
    for a, b, c in offsets:
        full[windows(a, b, c)] += np.moveaxis(np.tensordot(x.data, weight.data[:, :, a, b, c],
                                                           axes=([1], [0])), -1, 1)

    def backward(grad):
        if bias is not None:
            bias.accumulate(grad.sum(axis=(0, *SPATIAL)))
        grad_full = np.zeros(full.shape, dtype=grad.dtype)
        grad_full[crop] = grad
        if x.requires_grad:
            dx = np.zeros_like(x.data)
            for a, b, c in offsets:
                dx += np.moveaxis(np.tensordot(grad_full[windows(a, b, c)], weight.data[:, :, a, b, c],
                                               axes=([1], [1])), -1, 1)
            x.accumulate(dx)
        if weight.requires_grad:
            dw = np.zeros_like(weight.data)
            for a, b, c in offsets:
                dw[:, :, a, b, c] = np.tensordot(x.data, grad_full[windows(a, b, c)],
                                                 axes=([0, 2, 3, 4], [0, 2, 3, 4]))
            weight.accumulate(dw)
    out = _with_bias(np.ascontiguousarray(full[crop]), bias)
    return result(out, _parents(x, weight, bias), backward, "conv3d_transpose")


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = INSTANCE_NORM_EPS) -> Tensor:
    """
    Normalizes every (batch, channel) over its spatial axes, then applies a per-channel affine.
    """
    n = np.prod(x.shape[2:])
    mu = x.data.mean(axis=SPATIAL, keepdims=True)
    inv_std = 1.0 / np.sqrt(x.data.var(axis=SPATIAL, keepdims=True) + eps)
    normalized = (x.data - mu) * inv_std
    g = gamma.data.reshape(1, -1, 1, 1, 1)

    def backward(grad):
        if x.requires_grad:
            dn = grad * g
            dx = inv_std / n * (n * dn - dn.sum(axis=SPATIAL, keepdims=True)
                                - normalized * (dn * normalized).sum(axis=SPATIAL, keepdims=True))
            x.accumulate(dx.astype(x.dtype, copy=False))
        gamma.accumulate((grad * normalized).sum(axis=(0, *SPATIAL)).astype(gamma.dtype, copy=False))
        beta.accumulate(grad.sum(axis=(0, *SPATIAL)).astype(beta.dtype, copy=False))
    out = normalized * g + beta.data.reshape(1, -1, 1, 1, 1)
    return result(out.astype(x.dtype, copy=False), (x, gamma, beta), backward, "instance_norm")


def leaky_relu(x: Tensor, alpha: float) -> Tensor:
    slope = np.where(_branch(x.data > 0), 1.0, alpha).astype(x.dtype)

    def backward(grad):
        x.accumulate(grad * slope)
    return result(x.data * slope, (x,), backward, "leaky_relu")


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, 0.0)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward(grad):
        x.accumulate(grad * (1 - out * out))
    return result(out, (x,), backward, "tanh")


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.data)

    def backward(grad):
        x.accumulate(grad * out * (1 - out))
    return result(out, (x,), backward, "sigmoid")


def dropout(x: Tensor, p: float, rng: np.random.Generator, training: bool = True) -> Tensor:
    """
    Inverted dropout: kept voxels are scaled by 1 / (1 - p) so evaluation needs no rescaling.
    """
    if not training or p == 0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1 - p)

    def backward(grad):
        x.accumulate(grad * keep)
    return result(x.data * keep, (x,), backward, "dropout")


def nearest_upsample(x: Tensor, factor: int = 2) -> Tensor:
    out = x.data
    for axis in SPATIAL:
        out = np.repeat(out, factor, axis=axis)

    def backward(grad):
        b, c, z, y, w = x.shape
        x.accumulate(grad.reshape(b, c, z, factor, y, factor, w, factor).sum(axis=(3, 5, 7)))
    return result(out, (x,), backward, "nearest_upsample")


def avg_downsample(x: Tensor, factor: int = 2) -> Tensor:
    b, c, z, y, w = x.shape
    if z % factor or y % factor or w % factor:
        raise GeometryError(f"avg_downsample: spatial shape {x.shape[2:]} is not divisible by {factor}")
    out = x.data.reshape(b, c, z // factor, factor, y // factor, factor, w // factor, factor).mean(axis=(3, 5, 7))

    def backward(grad):
        spread = grad / factor ** 3
        for axis in SPATIAL:
            spread = np.repeat(spread, factor, axis=axis)
        x.accumulate(spread)
    return result(out, (x,), backward, "avg_downsample")


def binary_cross_entropy(scores: Tensor, target: float) -> Tensor:
    """
    Mean of -[t log p + (1 - t) log(1 - p)] against a constant label t.

    Scores are clamped to [SCORE_EPS, 1 - SCORE_EPS]; clamped voxels pass no gradient.
    """
    p = np.clip(scores.data, SCORE_EPS, 1 - SCORE_EPS)
    inside = _branch((scores.data > SCORE_EPS) & (scores.data < 1 - SCORE_EPS))
    loss = -np.mean(target * np.log(p) + (1 - target) * np.log(1 - p))

    def backward(grad):
        local = -(target / p - (1 - target) / (1 - p)) / p.size
        scores.accumulate((grad * local * inside).astype(scores.dtype, copy=False))
    return result(np.asarray(loss, dtype=scores.dtype), (scores,), backward, "bce")


def l1_loss(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise GeometryError(f"l1_loss: shapes {a.shape} and {b.shape} differ")
    diff = a.data - b.data
    _branch(diff > 0)
    sign = np.sign(diff) / diff.size

    def backward(grad):
        a.accumulate((grad * sign).astype(a.dtype, copy=False))
        b.accumulate((-grad * sign).astype(b.dtype, copy=False))
    return result(np.asarray(np.abs(diff).mean(), dtype=a.dtype), (a, b), backward, "l1")


def weighted_sum(x: Tensor, weights: np.ndarray) -> Tensor:
    """
    sum(x * weights) against a constant array; the scalar loss used by gradient checks.
    """
    return total(mul(x, as_tensor(weights, x.dtype)))
