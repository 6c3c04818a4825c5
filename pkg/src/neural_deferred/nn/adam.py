"""Bias-corrected Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8
LR = 5e-5


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    lr: float = LR
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPS

    @classmethod
    def like(cls, params, **hyper) -> AdamState:
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **hyper)

    def hyper(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads)))


def clip_by_global_norm(grads, max_norm: float):
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        return [g * g.dtype.type(scale) for g in grads], norm
    return grads, norm


def adam_step(params, grads, state: AdamState):
    """Update ``params`` in place and advance ``state``; non-finite gradients are rejected."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient; step rejected")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        step = (state.lr / c1) * m / (np.sqrt(v / c2) + state.eps)
        p -= step.astype(p.dtype)
    return params, state
