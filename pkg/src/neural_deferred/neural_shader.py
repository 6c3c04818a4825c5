"""Per-ray neural shading: features from G-buffer + sampled light, MLP per ray, mean per pixel."""

from __future__ import annotations

import numpy as np

from .core import Image, foreground_indices
from .nn.layers import encoded_width, positional_encoding
from .nn.mlp import Mlp
from .parallel import parallel_map
from .sampling import view_directions
from .shading import LightSample, SurfacePoint, light_samples, surface_arrays

BANDS = 4
DIR_WIDTH = encoded_width(3, BANDS)  # 27
PIXEL_WIDTH = 3 + DIR_WIDTH + 1 + 1 + DIR_WIDTH  # a, enc n, s, r, enc v = 59
RAY_WIDTH = DIR_WIDTH + 3  # enc l, log(1 + L <n.l>) = 30
FEATURE_WIDTH = PIXEL_WIDTH + RAY_WIDTH  # 89
DEFAULT_HIDDEN = (64, 64, 64)
RENDER_STREAM = 0x4E52
RENDER_CHUNK = 256


def make_shader_net(hidden=DEFAULT_HIDDEN, seed: int = 0, dtype=np.float32) -> Mlp:
    return Mlp([FEATURE_WIDTH, *hidden, 3], seed=seed, dtype=dtype)


def pixel_features(pt: SurfacePoint, v) -> np.ndarray:
    """Material and view block shared by every ray of a pixel, ``[..., 59]``."""
    v = np.broadcast_to(v, pt.normal.shape)
    return np.concatenate([
        pt.albedo,
        positional_encoding(pt.normal, BANDS),
        np.asarray(pt.specular)[..., None],
        np.asarray(pt.roughness)[..., None],
        positional_encoding(v, BANDS),
    ], axis=-1)


def ray_features(normal, samples: LightSample) -> np.ndarray:
    """Per-ray block ``[..., N, 30]``: encoded light direction and compressed incident light."""
    cos = np.clip(np.sum(normal[..., None, :] * samples.direction, axis=-1), 0.0, 1.0)
    light = np.log1p(samples.radiance * cos[..., None])
    return np.concatenate([positional_encoding(samples.direction, BANDS), light], axis=-1)


def build_features(pt: SurfacePoint, v, samples: LightSample) -> np.ndarray:
    """Full per-ray feature rows ``[..., N, 89]`` (pixel block repeated on every row)."""
    pix = pixel_features(pt, v)
    rays = ray_features(pt.normal, samples)
    pix = np.broadcast_to(pix[..., None, :], rays.shape[:-1] + (PIXEL_WIDTH,))
    return np.concatenate([pix, rays], axis=-1)


def shade_pixel_neural(net: Mlp, pt: SurfacePoint, v, samples: LightSample) -> np.ndarray:
    """Mean of per-ray network outputs; ``[..., 3]`` in (0, 1)."""
    return net(build_features(pt, v, samples)).mean(axis=-2)


def shade_grouped(net: Mlp, pix: np.ndarray, rays: np.ndarray):
    """Fast path for ``[P]`` pixels x ``[R]`` rays; returns ``(colors[P, 3], cache)``."""
    y, cache = net.forward_grouped(pix, rays)
    return y.mean(axis=1), cache


def _render_chunk(args):
    net, g, env, views, idx, rays, rng = args
    pt = surface_arrays(g, idx, net.dtype)
    samples = light_samples(env, pt.normal, idx, rays, rng)
    colors, _ = shade_grouped(net, pixel_features(pt, views[idx]), ray_features(pt.normal, samples))
    return colors


def render_unshadowed(net: Mlp, g, cam, env, rays_per_pixel: int = 128, rng=None,
                      workers: int = 1) -> Image:
    """Neural shading of every foreground pixel; background stays zero."""
    if rays_per_pixel < 1:
        raise ValueError("rays_per_pixel must be >= 1")
    from .sampling import Rng
    rng = (rng or Rng(0)).split(RENDER_STREAM)
    views = view_directions(cam, net.dtype).reshape(-1, 3)
    idx_all = foreground_indices(g)
    chunks = [idx_all[i:i + RENDER_CHUNK] for i in range(0, len(idx_all), RENDER_CHUNK)]
    results = parallel_map(_render_chunk, [(net, g, env, views, c, rays_per_pixel, rng)
                                           for c in chunks], workers)
    out = np.zeros((g.height * g.width, 3), net.dtype)
    for c, colors in zip(chunks, results):
        out[c] = colors
    return Image(out.reshape(g.height, g.width, 3))
