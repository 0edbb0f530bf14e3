from __future__ import annotations

from typing import Sequence

import numpy as np

from .layers import Parameter


class SGD:
    """Momentum SGD with coupled L2 weight decay.

    ``v <- momentum * v + grad + weight_decay * param``; ``param <- param - lr * v``.
    """

    def __init__(self, params: Sequence[Parameter], lr: float, momentum: float = 0.0,
                 weight_decay: float = 0.0):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        for p, v in zip(self.params, self.velocity):
            if p.grad.shape != p.value.shape:
                raise ValueError(f"gradient shape {p.grad.shape} != parameter {p.value.shape}")
            v *= self.momentum
            v += p.grad
            if self.weight_decay:
                v += self.weight_decay * p.value
            p.value -= self.lr * v

    def zero_grad(self):
        for p in self.params:
            p.grad[...] = 0.0


def sgd_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
             velocity: Sequence[np.ndarray], lr: float, momentum: float = 0.0,
             weight_decay: float = 0.0):
    """Array-level form of :meth:`SGD.step`; updates ``params`` and ``velocity`` in place."""
    for w, g, v in zip(params, grads, velocity):
        if not (w.shape == g.shape == v.shape):
            raise ValueError(f"shape mismatch: param {w.shape}, grad {g.shape}, state {v.shape}")
        v *= momentum
        v += g + weight_decay * w
        w -= lr * v
