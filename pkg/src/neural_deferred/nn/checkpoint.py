"""Binary checkpoint container shared by the shading MLP and the shadow network.

Layout (little-endian)::

    b"NDSCKPT\\0"   magic
    u32            format version
    u32            header length, then that many bytes of UTF-8 JSON:
                   {"architecture": {...}, "shapes": [...], "seed", "epoch",
                    "adam": {"t", "lr", "beta1", "beta2", "eps"} | null, "meta": {...}}
    f32[]          parameter blobs in order
    f32[]          Adam first moments, then second moments (when "adam" is not null)
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adam import AdamState

MAGIC = b"NDSCKPT\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: object
    adam: AdamState | None = None
    seed: int = 0
    epoch: int = 0
    meta: dict = field(default_factory=dict)


def build_model(descriptor: dict, params):
    kind = descriptor.get("kind")
    if kind == "mlp":
        from .mlp import Mlp
        return Mlp(descriptor["widths"], params)
    if kind == "shadow_net":
        from ..shadow_net import ShadowNet
        return ShadowNet.from_descriptor(descriptor, params)
    raise CheckpointError(f"unknown architecture kind {kind!r}")


def save_checkpoint(path: str | Path, model, adam: AdamState | None = None, seed: int = 0,
                    epoch: int = 0, meta: dict | None = None) -> None:
    params = model.params
    header = {
        "architecture": model.descriptor(),
        "shapes": [list(p.shape) for p in params],
        "seed": int(seed),
        "epoch": int(epoch),
        "adam": None if adam is None else {"t": adam.t, **adam.hyper()},
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    chunks = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob]
    arrays = list(params) + ([] if adam is None else list(adam.m) + list(adam.v))
    chunks += [np.ascontiguousarray(a, dtype="<f4").tobytes() for a in arrays]
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path, dtype=np.float32) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, n = struct.unpack_from("<II", raw, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[16:16 + n])
    pos = 16 + n
    shapes = [tuple(s) for s in header["shapes"]]

    def read(shape):
        nonlocal pos
        count = int(np.prod(shape))
        a = np.frombuffer(raw, "<f4", count, pos).reshape(shape).astype(dtype)
        pos += 4 * count
        return a

    try:
        params = [read(s) for s in shapes]
        adam = None
        if header["adam"] is not None:
            h = dict(header["adam"])
            t = h.pop("t")
            m = [read(s) for s in shapes]
            v = [read(s) for s in shapes]
            adam = AdamState(m, v, t, **h)
    except ValueError as exc:
        raise CheckpointError(f"{path}: truncated checkpoint") from exc
    if pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - pos} trailing bytes")
    model = build_model(header["architecture"], params)
    return Checkpoint(model, adam, header["seed"], header["epoch"], header["meta"])
