"""3x3 convolutions on NHWC batches via im2col, and the matching transposed convolution.

Convolution weights are ``(3, 3, C_in, C_out)``; padding is one zero pixel on every side,
so stride 1 keeps the size and stride 2 halves it (even sizes only).  The transposed
convolution is the exact adjoint of the stride-2 convolution and doubles the size; its
weights are stored as ``(3, 3, C_out, C_in)``, i.e. as the stride-2 conv it undoes.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

K = 3


def _check_stride(x, stride):
    if stride not in (1, 2):
        raise ValueError("stride must be 1 or 2")
    if stride == 2 and (x.shape[1] % 2 or x.shape[2] % 2):
        raise ValueError("stride-2 convolution needs even spatial dimensions")


def im2col(x, stride=1):
    """Patches of ``x[N, H, W, C]`` as ``[N, Ho, Wo, 3, 3, C]``."""
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (K, K), axis=(1, 2))  # N, H, W, C, 3, 3
    win = win[:, ::stride, ::stride]
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))


def col2im(cols, shape, stride=1):
    """Adjoint of :func:`im2col`: scatter-add patches back onto an ``N, H, W, C`` image."""
    n, h, w, c = shape
    ho, wo = cols.shape[1], cols.shape[2]
    out = np.zeros((n, h + 2, w + 2, c), cols.dtype)
    for di in range(K):
        for dj in range(K):
            out[:, di:di + stride * ho:stride, dj:dj + stride * wo:stride] += cols[:, :, :, di, dj]
    return out[:, 1:-1, 1:-1]


def conv_forward(x, w, b=None, stride=1):
    """Cross-correlation of ``x[N, H, W, Cin]`` with ``w[3, 3, Cin, Cout]``."""
    _check_stride(x, stride)
    if x.shape[-1] != w.shape[2]:
        raise ValueError(f"input has {x.shape[-1]} channels, kernel expects {w.shape[2]}")
    cols = im2col(x, stride)
    n, ho, wo = cols.shape[:3]
    y = cols.reshape(n * ho * wo, -1) @ w.reshape(-1, w.shape[3])
    if b is not None:
        y += b
    return y.reshape(n, ho, wo, w.shape[3]), cols


def conv_backward(x_shape, cols, w, dy, stride=1):
    """Returns ``(dx, dw, db)`` for :func:`conv_forward`."""
    m = dy.shape[0] * dy.shape[1] * dy.shape[2]
    dy2 = dy.reshape(m, -1)
    dw = (cols.reshape(m, -1).T @ dy2).reshape(w.shape)
    dcols = (dy2 @ w.reshape(-1, w.shape[3]).T).reshape(cols.shape)
    return col2im(dcols, x_shape, stride), dw, dy2.sum(axis=0)


def conv_transpose_forward(y, w, b=None):
    """2x upsampling: adjoint of a stride-2 conv with weights ``w[3, 3, Cout, Cin]``."""
    n, h, wd, cin = y.shape
    if cin != w.shape[3]:
        raise ValueError(f"input has {cin} channels, kernel expects {w.shape[3]}")
    cout = w.shape[2]
    cols = (y.reshape(-1, cin) @ w.reshape(-1, cin).T).reshape(n, h, wd, K, K, cout)
    out = col2im(cols, (n, 2 * h, 2 * wd, cout), stride=2)
    if b is not None:
        out = out + b
    return out


def conv_transpose_backward(y, w, dout):
    """Returns ``(dy, dw, db)`` for :func:`conv_transpose_forward`."""
    cols = im2col(dout, stride=2)  # N, h, w, 3, 3, Cout
    n, h, wd = cols.shape[:3]
    cols2 = cols.reshape(n * h * wd, -1)
    cin = w.shape[3]
    dy = (cols2 @ w.reshape(-1, cin)).reshape(n, h, wd, cin)
    dw = (cols2.T @ y.reshape(-1, cin)).reshape(w.shape)
    return dy, dw, dout.sum(axis=(0, 1, 2))
