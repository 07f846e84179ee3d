import logging
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

import voxcascade.nn.functional as F
from voxcascade.base_classes.base_network import get_network
from voxcascade.nn.tensor import Tensor, no_grad

logger = logging.getLogger(__name__)

# Central-difference step, in the float64 units the checks run at.
STEP = 1e-5
TOLERANCE = 1e-4
# Times the step is divided by 10 when a perturbation moves some voxel across a kink.
MAX_SHRINK = 4


def _evaluate(fn: Callable[[], Tensor]) -> Tuple[float, List[np.ndarray]]:
    with no_grad(), F.record_branches() as branches:
        value = float(fn().data)
    return value, branches


def _same_branches(a: List[np.ndarray], b: List[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], rng: np.random.Generator,
                    samples: int = 6, h: float = STEP) -> float:
    """
    Compares backpropagated gradients with central finite differences.

    A coordinate whose +h or -h evaluation lands on another piece of a relu, clamp or
    absolute value than the unperturbed one is retried with a step ten times smaller.

    :param fn: builds a scalar from `inputs`, reading their current values on every call.
    :param inputs: tensors to perturb, float64 with requires_grad set.
    :param rng: picks the coordinates to perturb.
    :param samples: coordinates perturbed per input.
    :param h: finite-difference step.
    :return: max |analytic - numeric| over the sampled coordinates, relative to the largest gradient seen.
    """
    for t in inputs:
        t.zero_grad()
    fn().backward()
    _, base = _evaluate(fn)
    analytic, numeric = [], []
    for t in inputs:
        grad = np.zeros_like(t.data) if t.grad is None else t.grad
        for flat in rng.choice(t.data.size, min(samples, t.data.size), replace=False):
            index = np.unravel_index(flat, t.shape)
            original = t.data[index]
            step = h
            for _ in range(MAX_SHRINK + 1):
                t.data[index] = original + step
                plus, up = _evaluate(fn)
                t.data[index] = original - step
                minus, down = _evaluate(fn)
                if _same_branches(up, base) and _same_branches(down, base):
                    break
                step /= 10
            else:
                logger.debug("Coordinate %s still crosses a kink at step %g", index, step * 10)
                step *= 10
            t.data[index] = original
            analytic.append(grad[index])
            numeric.append((plus - minus) / (2 * step))
    analytic, numeric = np.array(analytic), np.array(numeric)
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


def _leaf(rng: np.random.Generator, *shape, low: float = -1.0, high: float = 1.0) -> Tensor:
    return Tensor(rng.uniform(low, high, shape), requires_grad=True)


def _scalar_of(out: Tensor, weights: np.ndarray) -> Tensor:
    return F.weighted_sum(out, weights)


def op_checks(rng: np.random.Generator) -> Dict[str, Callable[[], float]]:
    """
    One finite-difference check per differentiable op, on small random float64 shapes.
    """
    def unary(op, *shape, low=-1.0, high=1.0):
        def run():
            x = _leaf(rng, *shape, low=low, high=high)
            weights = rng.normal(size=op(x).shape)
            return check_gradients(lambda: _scalar_of(op(x), weights), [x], rng)
        return run

    def conv(stride, padding, mode):
        def run():
            x, w, b = _leaf(rng, 1, 2, 5, 5, 5), _leaf(rng, 3, 2, 3, 3, 3), _leaf(rng, 3)
            weights = rng.normal(size=F.conv3d(x, w, b, stride, padding, mode).shape)
            return check_gradients(lambda: _scalar_of(F.conv3d(x, w, b, stride, padding, mode), weights), [x, w, b], rng)
        return run

    def conv_transpose():
        x, w, b = _leaf(rng, 1, 2, 3, 3, 3), _leaf(rng, 2, 3, 4, 4, 4), _leaf(rng, 3)
        weights = rng.normal(size=F.conv3d_transpose(x, w, b, 2, 1).shape)
        return check_gradients(lambda: _scalar_of(F.conv3d_transpose(x, w, b, 2, 1), weights), [x, w, b], rng)

    def instance_norm():
        x, gamma, beta = _leaf(rng, 2, 3, 4, 4, 4), _leaf(rng, 3, low=0.5, high=1.5), _leaf(rng, 3)
        weights = rng.normal(size=x.shape)
        return check_gradients(lambda: _scalar_of(F.instance_norm(x, gamma, beta), weights), [x, gamma, beta], rng)

    def dropout():
        x = _leaf(rng, 1, 2, 4, 4, 4)
        weights = rng.normal(size=x.shape)
        return check_gradients(lambda: _scalar_of(F.dropout(x, 0.5, np.random.default_rng(7)), weights), [x], rng)

    def concat():
        a, b = _leaf(rng, 1, 2, 3, 3, 3), _leaf(rng, 1, 1, 3, 3, 3)
        weights = rng.normal(size=(1, 3, 3, 3, 3))
        return check_gradients(lambda: _scalar_of(F.concat([a, b]), weights), [a, b], rng)

    def bce(target):
        def run():
            scores = _leaf(rng, 1, 1, 2, 2, 2, low=0.05, high=0.95)
            return check_gradients(lambda: F.binary_cross_entropy(scores, target), [scores], rng)
        return run

    def l1():
        a, b = _leaf(rng, 1, 1, 3, 3, 3), _leaf(rng, 1, 1, 3, 3, 3)
        return check_gradients(lambda: F.l1_loss(a, b), [a, b], rng)

    return {
        "conv3d": conv(1, 0, "zeros"),
        "conv3d_zero_pad": conv(1, 1, "zeros"),
        "conv3d_replicate_pad": conv(1, 1, "replicate"),
        "conv3d_stride2": conv(2, 1, "zeros"),
        "conv3d_transpose": conv_transpose,
        "instance_norm": instance_norm,
        "leaky_relu": unary(lambda x: F.leaky_relu(x, 0.2), 1, 2, 3, 3, 3),
        "relu": unary(F.relu, 1, 2, 3, 3, 3),
        "tanh": unary(F.tanh, 1, 2, 3, 3, 3),
        "sigmoid": unary(F.sigmoid, 1, 2, 3, 3, 3),
        "dropout": dropout,
        "nearest_upsample": unary(F.nearest_upsample, 1, 2, 2, 2, 2),
        "avg_downsample": unary(F.avg_downsample, 1, 2, 4, 4, 4),
        "replicate_pad": unary(lambda x: F.pad(x, 2, "replicate"), 1, 1, 3, 3, 3),
        "concat": concat,
        "bce_real": bce(1.0),
        "bce_fake": bce(0.0),
        "l1": l1,
    }


# Small float64 instances of every trainable family, with the input side they take.
NETWORK_CHECKS = {
    "lr_unet": ({"lr_side": 16, "base_channels": 2}, 32),
    "hr_resnet": ({"patch_side": 8, "channels": 3, "res_blocks": 2}, 8),
    "discriminator": ({"in_channels": 3, "base_channels": 2}, 32),
}


def network_check(family: str, rng: np.random.Generator, seed: int = 0) -> float:
    config, side = NETWORK_CHECKS[family]
    network = get_network(family)(seed=seed, dtype="float64", **config).eval()
    x = Tensor(rng.uniform(0, 1, (1, network.in_channels, side, side, side)), requires_grad=True)
    weights = rng.normal(size=(1, 1, *[network.output_side(side)] * 3))
    return check_gradients(lambda: _scalar_of(network(x), weights), [x] + network.parameters(), rng, samples=2)


def run_gradchecks(seed: int = 0, networks: bool = True) -> Dict[str, float]:
    """
    Runs every op check and, optionally, the full-network checks.

    :param seed: seeds the shapes' values and the perturbed coordinates.
    :param networks: include the three trainable network families.
    :return: relative error per check name.
    """
    rng = np.random.default_rng(seed)
    errors = {name: run() for name, run in op_checks(rng).items()}
    if networks:
        for family in NETWORK_CHECKS:
            errors[family] = network_check(family, rng, seed)
    for name, error in errors.items():
        logger.info("gradcheck %-22s relative error %.3g", name, error)
    return errors


def failing(errors: Dict[str, float], tolerance: float = TOLERANCE) -> List[str]:
    return [name for name, error in errors.items() if not error < tolerance]
