"""Encoder-decoder that predicts a multiplicative shadow map from the unshadowed render."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ContractError, Image
from .nn.conv import conv_backward, conv_forward, conv_transpose_backward, conv_transpose_forward
from .nn.layers import relu, relu_backward, sigmoid, sigmoid_backward

ENC = (16, 32, 64)
DEC_OUT = 16
FINAL_BIAS = 3.0  # sigmoid(3) ~ 0.95: start close to "no shadow"


def _he(gen, shape, fan_in, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return gen.uniform(-bound, bound, shape).astype(dtype)


def shadow_input(unshadowed, g, use_ao: bool = True) -> np.ndarray:
    """Stack RGB, normal and (optionally) AO planes into an ``H x W x 7`` (or 6) array."""
    rgb = unshadowed.data if isinstance(unshadowed, Image) else np.asarray(unshadowed)
    planes = [rgb, g.normal.data] + ([g.ao.data] if use_ao else [])
    shapes = {p.shape[:2] for p in planes}
    if len(shapes) != 1:
        raise ContractError(f"resolution mismatch between inputs: {sorted(shapes)}")
    return np.concatenate(planes, axis=-1).astype(np.float32)


@dataclass
class _Cache:
    x: np.ndarray
    acts: dict


class ShadowNet:
    """Three stride-2 conv blocks (16, 32, 64 channels), three transposed-conv blocks with
    skip connections, and a 3x3 sigmoid head producing one channel at input resolution.

    Parameters, in order: e1, e2, e3, d3, d2, d1, head (each a weight then a bias).
    """

    kind = "shadow_net"

    def __init__(self, use_ao: bool = True, params=None, seed: int = 0, dtype=np.float32,
                 final_bias: float = FINAL_BIAS):
        self.use_ao = use_ao
        self.in_channels = 7 if use_ao else 6
        c0, c1, c2 = ENC
        cin = self.in_channels
        # (kind, weight shape); transposed weights are (3, 3, Cout, Cin)
        self.layout = [
            ("conv", (3, 3, cin, c0)),
            ("conv", (3, 3, c0, c1)),
            ("conv", (3, 3, c1, c2)),
            ("convT", (3, 3, c1, c2)),
            ("convT", (3, 3, c0, 2 * c1)),
            ("convT", (3, 3, DEC_OUT, 2 * c0)),
            ("conv", (3, 3, DEC_OUT + cin, 1)),
        ]
        if params is None:
            gen = np.random.Generator(np.random.Philox(key=seed))
            params = []
            for kind, shape in self.layout[:-1]:
                fan_in = 9 * (shape[2] if kind == "conv" else shape[3])
                nout = shape[3] if kind == "conv" else shape[2]
                params += [_he(gen, shape, fan_in, dtype), np.zeros(nout, dtype)]
            params += [np.zeros(self.layout[-1][1], dtype), np.full(1, final_bias, dtype)]
        self.params = [np.asarray(p) for p in params]
        for i, (_, shape) in enumerate(self.layout):
            if self.params[2 * i].shape != shape:
                raise ValueError(f"shadow net layer {i}: expected {shape}, got {self.params[2 * i].shape}")

    @property
    def dtype(self):
        return self.params[0].dtype

    def descriptor(self) -> dict:
        return {"kind": self.kind, "use_ao": self.use_ao, "encoder": list(ENC), "decoder_out": DEC_OUT}

    @classmethod
    def from_descriptor(cls, d: dict, params) -> ShadowNet:
        return cls(use_ao=d["use_ao"], params=params)

    def copy(self) -> ShadowNet:
        return ShadowNet(self.use_ao, [p.copy() for p in self.params])

    def astype(self, dtype) -> ShadowNet:
        return ShadowNet(self.use_ao, [p.astype(dtype) for p in self.params])

    def forward(self, x):
        """``x[N, H, W, C]`` -> shadow map ``[N, H, W, 1]`` in (0, 1); H and W divisible by 8."""
        x = np.asarray(x, self.dtype)
        if x.ndim != 4 or x.shape[-1] != self.in_channels:
            raise ContractError(f"expected N x H x W x {self.in_channels} input, got {x.shape}")
        if x.shape[1] % 8 or x.shape[2] % 8:
            raise ContractError("shadow net needs spatial dimensions divisible by 8")
        p = self.params
        a = {}
        h1, a["c1"] = conv_forward(x, p[0], p[1], 2)
        e1 = relu(h1)
        h2, a["c2"] = conv_forward(e1, p[2], p[3], 2)
        e2 = relu(h2)
        h3, a["c3"] = conv_forward(e2, p[4], p[5], 2)
        e3 = relu(h3)
        g3 = conv_transpose_forward(e3, p[6], p[7])
        u3 = np.concatenate([relu(g3), e2], axis=-1)
        g2 = conv_transpose_forward(u3, p[8], p[9])
        u2 = np.concatenate([relu(g2), e1], axis=-1)
        g1 = conv_transpose_forward(u2, p[10], p[11])
        u1 = np.concatenate([relu(g1), x], axis=-1)
        logit, a["c4"] = conv_forward(u1, p[12], p[13], 1)
        out = sigmoid(logit)
        a.update(h1=h1, e1=e1, h2=h2, e2=e2, h3=h3, e3=e3, g3=g3, u3=u3, g2=g2, u2=u2, g1=g1,
                 u1=u1, out=out)
        return out, _Cache(x, a)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache: _Cache, dout, return_input_grad: bool = False):
        p = self.params
        a = cache.acts
        grads = [None] * len(p)
        dlogit = sigmoid_backward(a["out"], dout)
        du1, grads[12], grads[13] = conv_backward(a["u1"].shape, a["c4"], p[12], dlogit, 1)
        dx = du1[..., DEC_OUT:]
        dg1 = relu_backward(a["g1"], du1[..., :DEC_OUT])
        du2, grads[10], grads[11] = conv_transpose_backward(a["u2"], p[10], dg1)
        c0 = ENC[0]
        de1 = du2[..., c0:]
        dg2 = relu_backward(a["g2"], du2[..., :c0])
        du3, grads[8], grads[9] = conv_transpose_backward(a["u3"], p[8], dg2)
        c1 = ENC[1]
        de2 = du3[..., c1:]
        dg3 = relu_backward(a["g3"], du3[..., :c1])
        de3, grads[6], grads[7] = conv_transpose_backward(a["e3"], p[6], dg3)
        dh3 = relu_backward(a["h3"], de3)
        de2_b, grads[4], grads[5] = conv_backward(a["e2"].shape, a["c3"], p[4], dh3, 2)
        dh2 = relu_backward(a["h2"], de2 + de2_b)
        de1_b, grads[2], grads[3] = conv_backward(a["e1"].shape, a["c2"], p[2], dh2, 2)
        dh1 = relu_backward(a["h1"], de1 + de1_b)
        dx_b, grads[0], grads[1] = conv_backward(cache.x.shape, a["c1"], p[0], dh1, 2)
        if return_input_grad:
            return grads, dx + dx_b
        return grads


def estimate_shadow(net: ShadowNet, unshadowed, normal, ao) -> Image:
    """Single forward pass of the shadow network on one image; returns a 1-channel map."""
    planes = [unshadowed, normal] + ([ao] if net.use_ao else [])
    arrays = [p.data if isinstance(p, Image) else np.asarray(p) for p in planes]
    arrays = [a[..., None] if a.ndim == 2 else a for a in arrays]
    if len({a.shape[:2] for a in arrays}) != 1:
        raise ContractError("unshadowed, normal and AO planes differ in resolution")
    x = np.concatenate(arrays, axis=-1)
    return Image(net(x[None].astype(net.dtype))[0])


def apply_shadow(unshadowed, shadow):
    """Hadamard product of an RGB image with a single-channel map broadcast over channels."""
    u = unshadowed.data if isinstance(unshadowed, Image) else np.asarray(unshadowed)
    s = shadow.data if isinstance(shadow, Image) else np.asarray(shadow)
    if s.ndim == 2:
        s = s[..., None]
    if u.shape[:2] != s.shape[:2]:
        raise ContractError(f"image {u.shape[:2]} and shadow map {s.shape[:2]} differ in size")
    out = u * s
    return Image(out) if isinstance(unshadowed, Image) else out
