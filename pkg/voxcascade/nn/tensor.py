from contextlib import contextmanager
from typing import Callable, Iterator, List, Sequence, Tuple

import numpy as np

from voxcascade.logic.memory_tracker import track

_GRAD_ENABLED = [True]


@contextmanager
def no_grad() -> Iterator[None]:
    """
    Operations inside the block build no graph (inference).
    """
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


def grad_enabled() -> bool:
    return _GRAD_ENABLED[-1]


class Tensor:
    """
    A numpy array with the reverse-mode bookkeeping needed to backpropagate through it.

    Each tensor produced by an op keeps its parents and a closure that pushes the
    output gradient into them; `backward` runs those closures in reverse topological order.
    """
    def __init__(self, data, requires_grad: bool = False, parents: Sequence["Tensor"] = (),
                 backward: Callable[[np.ndarray], None] = None, op: str = ""):
        self.data = track(np.asarray(data))
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = tuple(parents)
        self._backward = backward
        self._op = op

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        grad = np.asarray(grad)
        if grad.shape != self.data.shape:
            raise ValueError(f"Gradient of shape {grad.shape} for a tensor of shape {self.data.shape}")
        # never in place: the same array may have been handed to several parents
        self.grad = track(grad) if self.grad is None else track(self.grad + grad)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar tensor")
            grad = np.ones_like(self.data)

        order = self._topological_order()
        self.accumulate(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _topological_order(self) -> List["Tensor"]:
        order, visited = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def __add__(self, other):
        from voxcascade.nn.functional import add
        return add(self, as_tensor(other, self.dtype))

    __radd__ = __add__

    def __mul__(self, other):
        from voxcascade.nn.functional import mul
        return mul(self, as_tensor(other, self.dtype))

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + as_tensor(other, self.dtype) * -1.0

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}, op={self._op!r})"


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable[[np.ndarray], None], op: str) -> Tensor:
    """
    Wraps an op output, recording the graph only when some parent needs a gradient.
    """
    if grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward=backward, op=op)
    return Tensor(data, op=op)
