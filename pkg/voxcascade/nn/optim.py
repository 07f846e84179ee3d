from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from voxcascade.config.settings import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, ADAM_LR
from voxcascade.nn.tensor import Tensor


@dataclass
class AdamState:
    lr: float = ADAM_LR
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """
    One bias-corrected Adam update, applied to `params` in place.

    :param params: parameter arrays.
    :param grads: gradients, same shapes; None entries count as zero.
    :param state: moments and step count, created on the first call.
    """
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise ValueError(f"Adam state holds {len(state.m)} moments for {len(params)} parameters")

    state.step += 1
    correction1 = 1 - state.beta1 ** state.step
    correction2 = 1 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ValueError(f"Gradient of shape {g.shape} for a parameter of shape {p.shape}")
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        p -= (state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)).astype(p.dtype)


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float = ADAM_LR, beta1: float = ADAM_BETA1,
                 beta2: float = ADAM_BETA2, eps: float = ADAM_EPS):
        self.params = list(params)
        self.state = AdamState(lr, beta1, beta2, eps)

    def step(self) -> None:
        adam_step([p.data for p in self.params], [p.grad for p in self.params], self.state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
