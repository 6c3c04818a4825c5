"""Fully connected network with ReLU hidden layers and a sigmoid head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import dense_backward, relu, relu_backward, sigmoid, sigmoid_backward


def he_uniform(gen: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return gen.uniform(-bound, bound, (fan_in, fan_out)).astype(dtype)


@dataclass
class MlpCache:
    inputs: list  # input to every dense layer
    pre: list  # pre-activation of every hidden layer
    output: np.ndarray
    grouped: tuple | None = None  # (shared, rows) when the first layer was factored


class Mlp:
    """``widths = [in, hidden..., out]``; parameters are ``[W0, b0, W1, b1, ...]``."""

    kind = "mlp"

    def __init__(self, widths, params=None, seed: int = 0, dtype=np.float32):
        self.widths = [int(w) for w in widths]
        if len(self.widths) < 2:
            raise ValueError("an MLP needs at least input and output widths")
        if params is None:
            gen = np.random.Generator(np.random.Philox(key=seed))
            params = []
            for fi, fo in zip(self.widths[:-1], self.widths[1:]):
                params += [he_uniform(gen, fi, fo, dtype), np.zeros(fo, dtype)]
        self.params = [np.asarray(p) for p in params]
        for i, (fi, fo) in enumerate(zip(self.widths[:-1], self.widths[1:])):
            if self.params[2 * i].shape != (fi, fo) or self.params[2 * i + 1].shape != (fo,):
                raise ValueError(f"layer {i} parameters do not match widths {self.widths}")

    @property
    def dtype(self):
        return self.params[0].dtype

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    def descriptor(self) -> dict:
        return {"kind": self.kind, "widths": self.widths}

    def copy(self) -> Mlp:
        return Mlp(self.widths, [p.copy() for p in self.params])

    def astype(self, dtype) -> Mlp:
        return Mlp(self.widths, [p.astype(dtype) for p in self.params])

    def _check(self, x):
        if x.shape[-1] != self.widths[0]:
            raise ValueError(f"expected input width {self.widths[0]}, got {x.shape[-1]}")

    def _tail(self, h, inputs, pre):
        """Apply layers from the first activation onward; ``h`` is layer-0 pre-activation."""
        for i in range(1, self.n_layers):
            pre.append(h)
            a = relu(h)
            inputs.append(a)
            h = a @ self.params[2 * i] + self.params[2 * i + 1]
        return sigmoid(h)

    def forward(self, x):
        """Evaluate on ``x[..., in]``; returns ``(y, cache)`` with ``y`` in (0, 1)."""
        x = np.asarray(x, self.dtype)
        self._check(x)
        lead = x.shape[:-1]
        x2 = x.reshape(-1, self.widths[0])
        h = x2 @ self.params[0] + self.params[1]
        inputs, pre = [x2], []
        y = self._tail(h, inputs, pre)
        cache = MlpCache(inputs, pre, y)
        return y.reshape(*lead, self.widths[-1]), cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache: MlpCache | None, dy):
        """Gradients of a scalar loss given ``dy = dL/dy``; returns ``(param_grads, dx)``."""
        if cache is None:
            raise ValueError("backward needs the cache from a matching forward pass")
        dy = np.asarray(dy, self.dtype).reshape(cache.output.shape)
        dh = sigmoid_backward(cache.output, dy)
        grads = [None] * len(self.params)
        for i in reversed(range(self.n_layers)):
            w = self.params[2 * i]
            if i == 0 and cache.grouped is not None:
                return self._grouped_first_backward(cache, dh, grads), None
            dx, grads[2 * i], grads[2 * i + 1] = dense_backward(cache.inputs[i], w, dh)
            if i > 0:
                dh = relu_backward(cache.pre[i - 1], dx)
        return grads, dx

    # Pixel-shared features enter the first layer once per pixel instead of once per ray;
    # mathematically identical to forward(concat(shared broadcast, rows)).

    def forward_grouped(self, shared, rows):
        """``shared[P, ds]`` broadcast against ``rows[P, R, dr]``; returns ``y[P, R, out]``."""
        shared = np.asarray(shared, self.dtype)
        rows = np.asarray(rows, self.dtype)
        ds = shared.shape[-1]
        if ds + rows.shape[-1] != self.widths[0]:
            raise ValueError("shared + per-row widths must equal the input width")
        p, r, dr = rows.shape
        w0 = self.params[0]
        hs = shared @ w0[:ds] + self.params[1]
        h = (rows.reshape(-1, dr) @ w0[ds:]).reshape(p, r, -1) + hs[:, None, :]
        inputs, pre = [None], []
        y = self._tail(h.reshape(p * r, -1), inputs, pre)
        cache = MlpCache(inputs, pre, y, grouped=(shared, rows))
        return y.reshape(p, r, self.widths[-1]), cache

    def _grouped_first_backward(self, cache, dh, grads):
        shared, rows = cache.grouped
        p, r, dr = rows.shape
        dh_sum = dh.reshape(p, r, -1).sum(axis=1)
        grads[0] = np.concatenate([shared.T @ dh_sum, rows.reshape(-1, dr).T @ dh], axis=0)
        grads[1] = dh_sum.sum(axis=0)
        return grads


def mlp_forward(net: Mlp, batch):
    return net.forward(batch)


def mlp_backward(net: Mlp, cached: MlpCache, output_grad):
    return net.backward(cached, output_grad)
