"""Small NCHW layer toolkit with hand-written backward passes."""
from .functional import softmax, softmax_cross_entropy
from .layers import (BatchNorm2d, Conv2d, Dense, DepthwiseConv2d, GlobalAvgPool, Module,
                     Parameter, Residual, Sequential, SiLU, SqueezeExcitation)
from .optim import SGD, sgd_step

__all__ = [
    "BatchNorm2d", "Conv2d", "Dense", "DepthwiseConv2d", "GlobalAvgPool", "Module",
    "Parameter", "Residual", "SGD", "Sequential", "SiLU", "SqueezeExcitation",
    "sgd_step", "softmax", "softmax_cross_entropy",
]
