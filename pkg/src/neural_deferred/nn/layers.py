"""Elementwise activations, dense layers and positional encoding with hand-written gradients."""

from __future__ import annotations

import numpy as np


def relu(x):
    return np.maximum(x, 0)


def relu_backward(x, dy):
    return np.where(x > 0, dy, 0)


def sigmoid(x):
    # split branches keep exp() from overflowing in either direction
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid_backward(y, dy):
    """Gradient through a sigmoid given its output ``y``."""
    return dy * y * (1 - y)


def dense_forward(x, w, b):
    return x @ w + b


def dense_backward(x, w, dy):
    """Returns ``(dx, dw, db)`` for ``y = x @ w + b`` with ``x`` of shape ``[M, in]``."""
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def positional_encoding(x, bands: int):
    """``[x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x)]``.

    Each term is a block of ``d`` values, so the output width is ``d + 2 L d``.
    """
    x = np.asarray(x)
    parts = [x]
    for k in range(bands):
        arg = (np.pi * 2.0**k) * x
        parts.append(np.sin(arg))
        parts.append(np.cos(arg))
    return np.concatenate(parts, axis=-1)


def encoded_width(d: int, bands: int) -> int:
    return d + 2 * bands * d
