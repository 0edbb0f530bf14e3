"""Forward/backward pairs for the layer vocabulary.

Every ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes the upstream gradient and that cache. Tensors are NCHW float64.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def conv_out_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _pad(x, padding):
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _unpad(x, padding):
    if padding == 0:
        return x
    return x[:, :, padding:-padding, padding:-padding]


def conv2d_forward(x, w, b=None, stride: int = 1, padding: int = 0):
    """Cross-correlation of ``x (B,C,H,W)`` with ``w (O,C,kH,kW)``."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ValueError(f"conv2d shape mismatch: input {x.shape}, kernel {w.shape}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    o, c, kh, kw = w.shape
    bsz, _, h, wd = x.shape
    ho, wo = conv_out_size(h, kh, stride, padding), conv_out_size(wd, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d output would be empty for input {x.shape}")
    if kh == kw == 1 and stride == 1 and padding == 0:
        y = np.matmul(w.reshape(o, c), x.reshape(bsz, c, h * wd)).reshape(bsz, o, h, wd)
        cols = None
    else:
        xp = _pad(x, padding)
        cols = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
        y = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if b is not None:
        y = y + b[None, :, None, None]
    return np.ascontiguousarray(y), (x, w, b is not None, stride, padding, cols)


def conv2d_backward(dy, cache):
    """Returns ``(dx, dw, db)``; ``db`` is None for bias-free convolutions."""
    x, w, has_bias, stride, padding, cols = cache
    o, c, kh, kw = w.shape
    bsz, _, h, wd = x.shape
    db = dy.sum(axis=(0, 2, 3)) if has_bias else None
    if cols is None:
        dy2 = dy.reshape(bsz, o, h * wd)
        x2 = x.reshape(bsz, c, h * wd)
        dw = np.tensordot(dy2, x2, axes=([0, 2], [0, 2])).reshape(w.shape)
        dx = np.matmul(w.reshape(o, c).T, dy2).reshape(x.shape)
        return dx, dw, db
    ho, wo = dy.shape[2:]
    dw = np.tensordot(dy, cols, axes=([0, 2, 3], [0, 2, 3]))
    dcols = np.tensordot(dy, w, axes=([1], [0]))  # (B, Ho, Wo, C, kh, kw)
    dxp = np.zeros((bsz, c, h + 2 * padding, wd + 2 * padding))
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += \
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return _unpad(dxp, padding), dw, db


def depthwise_conv2d_forward(x, w, stride: int = 1, padding: int = 0):
    """Per-channel correlation of ``x (B,C,H,W)`` with ``w (C,kH,kW)``."""
    if x.ndim != 4 or w.ndim != 3 or x.shape[1] != w.shape[0]:
        raise ValueError(f"depthwise shape mismatch: input {x.shape}, kernel {w.shape}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    c, kh, kw = w.shape
    ho = conv_out_size(x.shape[2], kh, stride, padding)
    wo = conv_out_size(x.shape[3], kw, stride, padding)
    if ho < 1 or wo < 1:
        raise ValueError(f"depthwise output would be empty for input {x.shape}")
    xp = _pad(x, padding)
    y = np.zeros((x.shape[0], c, ho, wo))
    for i in range(kh):
        for j in range(kw):
            y += xp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] \
                * w[None, :, i, j, None, None]
    return y, (xp, w, stride, padding)


def depthwise_conv2d_backward(dy, cache):
    xp, w, stride, padding = cache
    c, kh, kw = w.shape
    ho, wo = dy.shape[2:]
    dxp = np.zeros_like(xp)
    dw = np.empty_like(w)
    for i in range(kh):
        for j in range(kw):
            sl = (slice(None), slice(None),
                  slice(i, i + stride * (ho - 1) + 1, stride),
                  slice(j, j + stride * (wo - 1) + 1, stride))
            dw[:, i, j] = np.einsum("bchw,bchw->c", dy, xp[sl])
            dxp[sl] += dy * w[None, :, i, j, None, None]
    return _unpad(dxp, padding), dw


def batch_norm_forward(x, gamma, beta, running_mean, running_var, train: bool,
                       eps: float = BN_EPS, momentum: float = BN_MOMENTUM):
    """Per-channel batch norm. In train mode ``running_*`` are updated in place."""
    if train:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        running_mean *= momentum
        running_mean += (1 - momentum) * mean
        running_var *= momentum
        running_var += (1 - momentum) * var
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return y, (xhat, gamma, inv_std, train)


def batch_norm_backward(dy, cache):
    """Returns ``(dx, dgamma, dbeta)``."""
    xhat, gamma, inv_std, train = cache
    dgamma = np.einsum("bchw,bchw->c", dy, xhat)
    dbeta = dy.sum(axis=(0, 2, 3))
    g = (gamma * inv_std)[None, :, None, None]
    if not train:
        return dy * g, dgamma, dbeta
    n = dy.shape[0] * dy.shape[2] * dy.shape[3]
    dx = g * (dy - (dbeta / n)[None, :, None, None]
              - xhat * (dgamma / n)[None, :, None, None])
    return dx, dgamma, dbeta


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def silu_forward(x):
    s = sigmoid(x)
    return x * s, (x, s)


def silu_backward(dy, cache):
    x, s = cache
    return dy * s * (1.0 + x * (1.0 - s))


def dense_forward(x, w, b):
    """``x (B,I) @ w.T + b`` with ``w (O,I)``."""
    if x.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ValueError(f"dense shape mismatch: input {x.shape}, weight {w.shape}")
    return x @ w.T + b, (x, w)


def dense_backward(dy, cache):
    x, w = cache
    return dy @ w, dy.T @ x, dy.sum(axis=0)


def global_avg_pool_forward(x):
    return x.mean(axis=(2, 3)), x.shape


def global_avg_pool_backward(dy, shape):
    h, w = shape[2], shape[3]
    return np.broadcast_to(dy[:, :, None, None] / (h * w), shape).copy()


def squeeze_excitation_forward(x, w1, b1, w2, b2):
    """Channel gating: pool -> dense -> SiLU -> dense -> sigmoid -> rescale."""
    s, _ = global_avg_pool_forward(x)
    z1, c1 = dense_forward(s, w1, b1)
    a, ca = silu_forward(z1)
    z2, c2 = dense_forward(a, w2, b2)
    g = sigmoid(z2)
    return x * g[:, :, None, None], (x, g, c1, ca, c2)


def squeeze_excitation_backward(dy, cache):
    """Returns ``(dx, dw1, db1, dw2, db2)``."""
    x, g, c1, ca, c2 = cache
    dx = dy * g[:, :, None, None]
    dg = np.einsum("bchw,bchw->bc", dy, x)
    dz2 = dg * g * (1.0 - g)
    da, dw2, db2 = dense_backward(dz2, c2)
    dz1 = silu_backward(da, ca)
    ds, dw1, db1 = dense_backward(dz1, c1)
    dx += global_avg_pool_backward(ds, x.shape)
    return dx, dw1, db1, dw2, db2


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. ``logits``."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    bsz, n_classes = logits.shape
    if labels.shape != (bsz,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {bsz}")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"label out of range [0, {n_classes})")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    logp = z[np.arange(bsz), labels] - log_norm
    loss = -logp.mean()
    grad = np.exp(z - log_norm[:, None])
    grad[np.arange(bsz), labels] -= 1.0
    return float(loss), grad / bsz
