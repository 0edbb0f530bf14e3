"""Central finite-difference checks for analytic gradients.

Errors are reported per array as ``max|analytic - numeric| / max(max|analytic|,
max|numeric|)`` and the worst array wins. Normalizing by the array's own scale
keeps near-zero entries from producing meaningless ratios.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import functional as F
from .layers import (BatchNorm2d, Conv2d, Dense, DepthwiseConv2d, Module, SiLU,
                     SqueezeExcitation)

FD_EPS = 1e-5


def relative_error(analytic, numeric) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


def numeric_gradient(f: Callable[[], float], array: np.ndarray, eps: float = FD_EPS) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``array`` (perturbed in place)."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f()
        flat[i] = orig - eps
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * eps)
    return grad


def grad_check(f: Callable[[], float], arrays: Sequence[np.ndarray],
               analytic: Sequence[np.ndarray], eps: float = FD_EPS) -> float:
    """Worst relative error between ``analytic`` and finite differences of ``f``."""
    return max(relative_error(a, numeric_gradient(f, x, eps)) for x, a in zip(arrays, analytic))


def check_module(module: Module, input_shape, seed: int = 0, train: bool = True,
                 eps: float = FD_EPS) -> float:
    """Gradient check of a module under the loss ``sum(module(x) * R)``.

    Covers the input and every trainable parameter.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(input_shape)
    y = module.forward(x, train)
    proj = rng.standard_normal(y.shape)

    def loss():
        return float(np.sum(module.forward(x, train) * proj))

    module.forward(x, train)
    module.zero_grad()
    dx = module.backward(proj)
    params = module.parameters()
    arrays = [x] + [p.value for p in params]
    analytic = [dx] + [p.grad.copy() for p in params]
    return grad_check(loss, arrays, analytic, eps)


def check_softmax_cross_entropy(batch: int = 4, classes: int = 6, seed: int = 0,
                                eps: float = FD_EPS) -> float:
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((batch, classes)) * 2
    labels = rng.integers(0, classes, batch)
    _, grad = F.softmax_cross_entropy(logits, labels)
    return grad_check(lambda: F.softmax_cross_entropy(logits, labels)[0], [logits], [grad], eps)


# (name, factory(rng), input shape, train mode, tolerance)
LAYER_CASES = [
    ("conv2d", lambda rng: Conv2d(3, 4, 3, stride=1, bias=True, rng=rng), (2, 3, 5, 5), True, 1e-6),
    ("conv2d_stride2", lambda rng: Conv2d(3, 4, 3, stride=2, bias=True, rng=rng), (2, 3, 5, 5), True, 1e-6),
    ("conv2d_1x1", lambda rng: Conv2d(3, 4, 1, rng=rng), (2, 3, 5, 5), True, 1e-6),
    ("depthwise", lambda rng: DepthwiseConv2d(3, 3, stride=1, rng=rng), (2, 3, 5, 5), True, 1e-6),
    ("depthwise_k5_stride2", lambda rng: DepthwiseConv2d(3, 5, stride=2, rng=rng), (2, 3, 5, 5), True, 1e-6),
    ("batch_norm", lambda rng: _randomized_bn(3, rng), (4, 3, 2, 2), True, 1e-5),
    ("batch_norm_eval", lambda rng: _randomized_bn(3, rng), (4, 3, 2, 2), False, 1e-5),
    ("silu", lambda rng: SiLU(), (2, 3, 4, 4), True, 1e-7),
    ("squeeze_excitation", lambda rng: SqueezeExcitation(4, 4, rng=rng), (2, 4, 3, 3), True, 1e-5),
    ("dense", lambda rng: Dense(5, 3, rng=rng), (4, 5), True, 1e-9),
]
SOFTMAX_CE_TOL = 1e-7


def _randomized_bn(channels, rng):
    bn = BatchNorm2d(channels)
    bn.gamma.value[:] = rng.uniform(0.5, 1.5, channels)
    bn.beta.value[:] = rng.standard_normal(channels)
    bn.running_mean.value[:] = rng.standard_normal(channels) * 0.1
    bn.running_var.value[:] = rng.uniform(0.5, 1.5, channels)
    return bn


def run_layer_suite(seeds=range(5)) -> list[tuple[str, int, float, float]]:
    """Every layer case over every seed: ``(name, seed, error, tolerance)`` rows."""
    rows = []
    for seed in seeds:
        for name, factory, shape, train, tol in LAYER_CASES:
            module = factory(np.random.default_rng(1000 + seed))
            rows.append((name, seed, check_module(module, shape, seed, train), tol))
        rows.append(("softmax_cross_entropy", seed, check_softmax_cross_entropy(seed=seed),
                     SOFTMAX_CE_TOL))
    return rows
