"""Render test scenes with each shading model and score them against oracle ground truth."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .metrics import evaluate
from .neural_shader import render_unshadowed
from .parallel import parallel_map
from .sampling import Rng
from .shading import render_classical
from .shadow_net import apply_shadow, shadow_input

COLUMNS = ["scene_id", "model", "mse", "psnr", "ssim", "lpips", "fid"]
MODELS = ("blinn-phong", "ggx", "neural", "neural+shadow")
EVAL_STREAM = 0xE7A1


@dataclass
class EvalSettings:
    rays: int = 128
    seed: int = 0
    target: str = "unshadowed"
    whole_image: bool = False
    intensity_scale: float = 1.0
    workers: int = 1


def render_model(model: str, rec, settings: EvalSettings, shader=None, shadow=None,
                 env=None) -> np.ndarray:
    """Clamped ``(H, W, 3)`` render of one scene under ``env`` (default: the scene's own)."""
    env = env or rec.env
    rng = Rng(settings.seed).split(EVAL_STREAM)
    if model in ("ggx", "blinn-phong"):
        img = render_classical(rec.gbuffer, rec.camera, env, settings.rays, rng, model,
                               settings.intensity_scale)
        return np.clip(img, 0.0, 1.0)
    if shader is None:
        raise ValueError(f"model {model!r} needs a shading checkpoint")
    img = render_unshadowed(shader, rec.gbuffer, rec.camera, env, settings.rays, rng).data
    if model == "neural":
        return img
    if model == "neural+shadow":
        if shadow is None:
            raise ValueError("neural+shadow needs a shadow checkpoint")
        smap = shadow(shadow_input(img, rec.gbuffer, shadow.use_ao)[None])[0]
        return apply_shadow(img, smap)
    raise ValueError(f"unknown model {model!r}")


def _score_scene(args):
    rec, models, settings, shader, shadow = args
    gt = rec.gt_shadowed if settings.target == "shadowed" else rec.gt_unshadowed
    mask = None if settings.whole_image else rec.gbuffer.foreground
    rows = []
    for model in models:
        pred = render_model(model, rec, settings, shader, shadow)
        rows.append({"scene_id": rec.scene_id, "model": model, **evaluate(pred, gt, mask)})
    return rows


def evaluate_scenes(records, models, settings: EvalSettings, shader=None, shadow=None) -> list[dict]:
    """One metrics row per (scene, model), in scene order then model order."""
    jobs = [(rec, tuple(models), settings, shader, shadow) for rec in records]
    return [row for rows in parallel_map(_score_scene, jobs, settings.workers) for row in rows]


def summarize(rows) -> dict:
    """Mean mse/psnr/ssim per model."""
    out = {}
    for model in dict.fromkeys(r["model"] for r in rows):
        sel = [r for r in rows if r["model"] == model]
        out[model] = {k: float(np.mean([r[k] for r in sel])) for k in ("mse", "psnr", "ssim")}
    return out


def write_metrics_csv(path, rows) -> None:
    """Table-shaped CSV; LPIPS and FID need pretrained networks and are reported as n/a."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([r["scene_id"], r["model"], repr(r["mse"]), repr(r["psnr"]),
                        repr(r["ssim"]), "n/a", "n/a"])
        for model, m in summarize(rows).items():
            w.writerow(["mean", model, repr(m["mse"]), repr(m["psnr"]), repr(m["ssim"]), "n/a", "n/a"])
