"""Two-phase optimization: the per-ray shading MLP first, then the shadow network with it frozen."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import foreground_indices
from .neural_shader import (DEFAULT_HIDDEN, make_shader_net, pixel_features, ray_features,
                            render_unshadowed)
from .nn.adam import AdamState, adam_step, clip_by_global_norm
from .nn.checkpoint import save_checkpoint
from .nn.mlp import Mlp
from .sampling import Rng, view_directions
from .shading import light_samples, surface_arrays
from .shadow_net import ShadowNet, shadow_input

log = logging.getLogger(__name__)

PHASE1_STREAM = 0x5031
PHASE2_STREAM = 0x5032
GRAD_CHUNK = 512
CLIP_NORM = 10.0


class NumericError(FloatingPointError):
    """Training produced a non-finite loss or gradient."""


@dataclass
class TrainConfig:
    epochs: int = 40
    batch: int = 8192
    rays: int = 128
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    hidden: tuple = DEFAULT_HIDDEN
    clip_norm: float = CLIP_NORM
    use_ao: bool = True
    workers: int = 1
    pixel_sampling: str = "per-image"

    def adam(self, params) -> AdamState:
        return AdamState.like(params, lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class TrainResult:
    model: object
    adam: AdamState
    losses: list = field(default_factory=list)  # (epoch, mean_loss, wall_time)


# -- losses ------------------------------------------------------------------------------------


def loss_phase1(pred, gt):
    """Mean over pixels of the per-pixel L1 distance summed over RGB; returns ``(loss, dL/dpred)``."""
    pred = np.asarray(pred)
    gt = np.asarray(gt, pred.dtype)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and target {gt.shape} differ")
    n = pred.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    diff = pred - gt
    loss = float(np.abs(diff).sum(dtype=np.float64) / n)
    return loss, np.sign(diff) / pred.dtype.type(n)


def loss_phase2(pred, gt, mask):
    """L1 over foreground pixels and channels, normalized by their count."""
    pred = np.asarray(pred)
    gt = np.asarray(gt, pred.dtype)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and target {gt.shape} differ")
    m = np.asarray(mask, bool).reshape(pred.shape[:2])
    count = int(m.sum()) * pred.shape[2]
    if count == 0:
        raise ValueError("empty foreground")
    diff = np.where(m[..., None], pred - gt, 0)
    loss = float(np.abs(diff).sum(dtype=np.float64) / count)
    return loss, np.sign(diff) / pred.dtype.type(count)


# -- phase 1 -----------------------------------------------------------------------------------


class _PixelTable:
    """Per-image static inputs for phase 1: foreground ids, pixel features, normals, targets."""

    def __init__(self, rec, dtype):
        g = rec.gbuffer
        self.idx = foreground_indices(g)
        pt = surface_arrays(g, self.idx, dtype)
        views = view_directions(rec.camera, dtype).reshape(-1, 3)[self.idx]
        self.normal = pt.normal
        self.pix = pixel_features(pt, views).astype(dtype)
        self.target = rec.gt_unshadowed.reshape(-1, 3)[self.idx].astype(dtype)
        self.env = rec.env


def _chunk_grads(net, pix, rays, target_grad_fn):
    """Forward/backward one pixel chunk; ``target_grad_fn(colors) -> (loss_part, dcolors)``."""
    y, cache = net.forward_grouped(pix, rays)
    colors = y.mean(axis=1)
    loss, dcolors = target_grad_fn(colors)
    r = y.shape[1]
    dy = np.broadcast_to(dcolors[:, None, :] / y.dtype.type(r), y.shape)
    grads, _ = net.backward(cache, dy)
    return loss, grads


def phase1_step(net: Mlp, table: _PixelTable, sel: np.ndarray, rays: int, rng: Rng,
                stream_offset: int, workers: int = 1):
    """Loss and gradient for the pixels ``sel`` of one image (fixed-order chunk reduction)."""
    n = len(sel)
    chunks = [sel[i:i + GRAD_CHUNK] for i in range(0, n, GRAD_CHUNK)]

    def work(c):
        ids = table.idx[c].astype(np.uint64) + np.uint64(stream_offset)
        samples = light_samples(table.env, table.normal[c], ids, rays, rng)
        feats = ray_features(table.normal[c], samples)
        target = table.target[c]

        def tg(colors):
            diff = colors - target
            return float(np.abs(diff).sum(dtype=np.float64)), np.sign(diff) / colors.dtype.type(n)
        return _chunk_grads(net, table.pix[c], feats, tg)

    if workers > 1 and len(chunks) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    loss = sum(p[0] for p in parts) / n
    grads = [sum(gs) for gs in zip(*(p[1] for p in parts))]
    return loss, grads


def init_output_bias(net: Mlp, targets) -> None:
    """Start the sigmoid head at the mean target color so early steps fit shape, not offset."""
    mean = np.concatenate([t.reshape(-1, 3) for t in targets]).mean(axis=0, dtype=np.float64)
    mean = np.clip(mean, 0.02, 0.98)
    net.params[-1][...] = np.log(mean / (1.0 - mean)).astype(net.dtype)


def _check_finite(loss, grads, net, adam, cfg, diag_path, epoch):
    if np.isfinite(loss) and all(np.all(np.isfinite(g)) for g in grads):
        return
    if diag_path is not None:
        save_checkpoint(diag_path, net, adam, cfg.seed, epoch, {"diagnostic": "non-finite loss"})
    raise NumericError(f"non-finite loss/gradient at epoch {epoch} (loss={loss})")


def train_phase1(cfg: TrainConfig, dataset, net: Mlp | None = None, adam: AdamState | None = None,
                 start_epoch: int = 0, diag_path=None, progress=None) -> TrainResult:
    """Fit the shading MLP to unshadowed ground truth, one batch of pixels per image per epoch."""
    if cfg.batch < 1 or cfg.rays < 1:
        raise ValueError("batch and rays must be >= 1")
    fresh = net is None
    net = net or make_shader_net(cfg.hidden, seed=Rng(cfg.seed).split(0x1417).state)
    tables = [_PixelTable(rec, net.dtype) for rec in dataset]
    if fresh:
        init_output_bias(net, [t.target for t in tables])
    adam = adam or cfg.adam(net.params)
    root = Rng(cfg.seed).split(PHASE1_STREAM)
    t0 = time.perf_counter()
    losses = []
    for epoch in range(start_epoch, cfg.epochs):
        erng = root.split(epoch)
        gen = erng.generator()
        order = gen.permutation(len(tables))
        step_losses = []
        for k in order:
            table = tables[k]
            n = len(table.idx)
            if n == 0:
                continue
            sel = np.sort(gen.choice(n, cfg.batch, replace=False)) if n > cfg.batch else np.arange(n)
            loss, grads = phase1_step(net, table, sel, cfg.rays, erng, int(k) << 32, cfg.workers)
            _check_finite(loss, grads, net, adam, cfg, diag_path, epoch)
            grads, _ = clip_by_global_norm(grads, cfg.clip_norm)
            adam_step(net.params, grads, adam)
            step_losses.append(loss)
        row = (epoch + 1, float(np.mean(step_losses)), time.perf_counter() - t0)
        losses.append(row)
        log.info("phase1 epoch %d loss %.5f (%.0fs)", *row)
        if progress:
            progress(row)
    return TrainResult(net, adam, losses)


# -- phase 2 -----------------------------------------------------------------------------------


def unshadowed_cache(net: Mlp, dataset, rays: int, seed: int, workers: int = 1) -> list:
    """Frozen-shader renders of every scene; computed once since the shader does not change."""
    rng = Rng(seed).split(PHASE2_STREAM)
    return [render_unshadowed(net, rec.gbuffer, rec.camera, rec.env, rays, rng, workers).data
            for rec in dataset]


def train_phase2(cfg: TrainConfig, dataset, frozen: Mlp, shadow: ShadowNet | None = None,
                 adam: AdamState | None = None, start_epoch: int = 0, cache=None,
                 diag_path=None, progress=None) -> TrainResult:
    """Fit the shadow network so that ``unshadowed * shadow`` matches shadowed ground truth."""
    shadow = shadow or ShadowNet(use_ao=cfg.use_ao, seed=Rng(cfg.seed).split(0x5D0).state)
    adam = adam or cfg.adam(shadow.params)
    if cache is None:
        cache = unshadowed_cache(frozen, dataset, cfg.rays, cfg.seed, cfg.workers)
    inputs = [shadow_input(u, rec.gbuffer, shadow.use_ao) for u, rec in zip(cache, dataset)]
    root = Rng(cfg.seed).split(PHASE2_STREAM, 1)
    t0 = time.perf_counter()
    losses = []
    for epoch in range(start_epoch, cfg.epochs):
        order = root.split(epoch).generator().permutation(len(dataset))
        step_losses = []
        for k in order:
            rec = dataset[k]
            mask = rec.gbuffer.foreground
            if not mask.any():
                continue
            unshadowed = cache[k]
            smap, fcache = shadow.forward(inputs[k][None])
            pred = unshadowed * smap[0]
            loss, dpred = loss_phase2(pred, rec.gt_shadowed, mask)
            dsmap = (dpred * unshadowed).sum(axis=-1, keepdims=True)[None]
            grads = shadow.backward(fcache, dsmap)
            _check_finite(loss, grads, shadow, adam, cfg, diag_path, epoch)
            grads, _ = clip_by_global_norm(grads, cfg.clip_norm)
            adam_step(shadow.params, grads, adam)
            step_losses.append(loss)
        row = (epoch + 1, float(np.mean(step_losses)), time.perf_counter() - t0)
        losses.append(row)
        log.info("phase2 epoch %d loss %.5f (%.0fs)", *row)
        if progress:
            progress(row)
    return TrainResult(shadow, adam, losses)


def write_loss_csv(path, losses) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "mean_loss", "wall_time"])
        for epoch, loss, wall in losses:
            w.writerow([epoch, repr(loss), f"{wall:.3f}"])


def write_config(path, cfg: TrainConfig, **extra) -> None:
    Path(path).write_text(json.dumps({**cfg.to_dict(), **extra}, indent=2, sort_keys=True) + "\n")
