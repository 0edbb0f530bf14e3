"""Stateful layers with explicit backward passes.

Each module caches what its backward needs during ``forward``; call
``backward`` once per ``forward``. Gradients land in ``Parameter.grad``.
"""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import functional as F


class Parameter:
    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape


class Module:
    def forward(self, x, train: bool = False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def __call__(self, x, train: bool = False):
        return self.forward(x, train)

    def own_params(self) -> dict[str, Parameter]:
        return {}

    def own_buffers(self) -> dict[str, Parameter]:
        return {}

    def named_children(self) -> list[tuple[str, "Module"]]:
        return []

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for k, p in self.own_params().items():
            yield prefix + k, p
        for name, child in self.named_children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_state(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        """Parameters and buffers in declaration order (the serialization order)."""
        for k, p in self.own_params().items():
            yield prefix + k, p
        for k, p in self.own_buffers().items():
            yield prefix + k, p
        for name, child in self.named_children():
            yield from child.named_state(f"{prefix}{name}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self.named_children():
            yield from child.modules()

    def zero_grad(self):
        for p in self.parameters():
            p.grad[...] = 0.0


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=None, bias=False, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.weight = Parameter(he_normal(rng, (out_ch, in_ch, kernel, kernel),
                                          in_ch * kernel * kernel))
        self.bias = Parameter(np.zeros(out_ch)) if bias else None

    def own_params(self):
        return {"weight": self.weight, **({"bias": self.bias} if self.bias is not None else {})}

    def forward(self, x, train=False):
        y, self._cache = F.conv2d_forward(x, self.weight.value,
                                          self.bias.value if self.bias is not None else None,
                                          self.stride, self.padding)
        return y

    def backward(self, dy):
        dx, dw, db = F.conv2d_backward(dy, self._cache)
        self.weight.grad += dw
        if self.bias is not None:
            self.bias.grad += db
        return dx


class DepthwiseConv2d(Module):
    def __init__(self, channels, kernel, stride=1, padding=None, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.weight = Parameter(he_normal(rng, (channels, kernel, kernel), kernel * kernel))

    def own_params(self):
        return {"weight": self.weight}

    def forward(self, x, train=False):
        y, self._cache = F.depthwise_conv2d_forward(x, self.weight.value, self.stride,
                                                    self.padding)
        return y

    def backward(self, dy):
        dx, dw = F.depthwise_conv2d_backward(dy, self._cache)
        self.weight.grad += dw
        return dx


class BatchNorm2d(Module):
    # train-mode batch statistics need at least this many samples
    min_train_batch = 2

    def __init__(self, channels):
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.running_mean = Parameter(np.zeros(channels))
        self.running_var = Parameter(np.ones(channels))

    def own_params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def own_buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, train=False):
        if train and x.shape[0] < self.min_train_batch:
            raise ValueError("batch norm in train mode needs a batch of at least 2")
        y, self._cache = F.batch_norm_forward(
            x, self.gamma.value, self.beta.value,
            self.running_mean.value, self.running_var.value, train)
        return y

    def backward(self, dy):
        dx, dg, db = F.batch_norm_backward(dy, self._cache)
        self.gamma.grad += dg
        self.beta.grad += db
        return dx


class SiLU(Module):
    def forward(self, x, train=False):
        y, self._cache = F.silu_forward(x)
        return y

    def backward(self, dy):
        return F.silu_backward(dy, self._cache)


class Dense(Module):
    def __init__(self, in_features, out_features, rng=None, init_scale=1.0):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Parameter(init_scale * he_normal(rng, (out_features, in_features),
                                                       in_features))
        self.bias = Parameter(np.zeros(out_features))

    def own_params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, train=False):
        y, self._cache = F.dense_forward(x, self.weight.value, self.bias.value)
        return y

    def backward(self, dy):
        dx, dw, db = F.dense_backward(dy, self._cache)
        self.weight.grad += dw
        self.bias.grad += db
        return dx


class GlobalAvgPool(Module):
    def forward(self, x, train=False):
        y, self._shape = F.global_avg_pool_forward(x)
        return y

    def backward(self, dy):
        return F.global_avg_pool_backward(dy, self._shape)


class SqueezeExcitation(Module):
    def __init__(self, channels, reduction=4, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        reduced = max(1, channels // reduction)
        self.w1 = Parameter(he_normal(rng, (reduced, channels), channels))
        self.b1 = Parameter(np.zeros(reduced))
        self.w2 = Parameter(he_normal(rng, (channels, reduced), reduced))
        self.b2 = Parameter(np.zeros(channels))

    def own_params(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def forward(self, x, train=False):
        y, self._cache = F.squeeze_excitation_forward(
            x, self.w1.value, self.b1.value, self.w2.value, self.b2.value)
        return y

    def backward(self, dy):
        dx, dw1, db1, dw2, db2 = F.squeeze_excitation_backward(dy, self._cache)
        self.w1.grad += dw1
        self.b1.grad += db1
        self.w2.grad += dw2
        self.b2.grad += db2
        return dx


class Sequential(Module):
    def __init__(self, *layers: Module):
        self.layers = list(layers)

    def named_children(self):
        return [(str(i), m) for i, m in enumerate(self.layers)]

    def forward(self, x, train=False):
        for m in self.layers:
            x = m.forward(x, train)
        return x

    def backward(self, dy):
        for m in reversed(self.layers):
            dy = m.backward(dy)
        return dy


class Residual(Module):
    """``x + body(x)``."""

    def __init__(self, body: Module):
        self.body = body

    def named_children(self):
        return [("body", self.body)]

    def forward(self, x, train=False):
        return x + self.body.forward(x, train)

    def backward(self, dy):
        return dy + self.body.backward(dy)
