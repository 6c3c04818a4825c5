"""Classical baselines (Blinn-Phong, GGX) and the uniform-hemisphere Monte Carlo estimator.

All functions broadcast over leading axes: a single surface point and direction pair,
or whole batches of pixels times light samples.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

GRAZING_EPS = 1e-6
MIN_ALPHA = 1e-3
F0_SCALE = 0.08


@dataclass(frozen=True)
class SurfacePoint:
    """Material and geometry at one or more shading points.

    Shapes: ``albedo[..., 3]``, ``normal[..., 3]``, ``specular[...]``, ``roughness[...]``.
    """

    albedo: np.ndarray
    normal: np.ndarray
    specular: np.ndarray
    roughness: np.ndarray

    def expand(self, axis: int = -1) -> SurfacePoint:
        """Insert an axis (e.g. for a light-sample dimension) before the last one."""
        return SurfacePoint(
            np.expand_dims(self.albedo, axis - 1),
            np.expand_dims(self.normal, axis - 1),
            np.expand_dims(np.asarray(self.specular), axis),
            np.expand_dims(np.asarray(self.roughness), axis),
        )


@dataclass(frozen=True)
class LightSample:
    direction: np.ndarray  # [..., 3] unit
    radiance: np.ndarray  # [..., 3] >= 0


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def _normalize(x):
    return x / np.maximum(np.linalg.norm(x, axis=-1, keepdims=True), 1e-12)


def blinn_phong_shininess(roughness):
    r2 = np.maximum(np.asarray(roughness) ** 2, 1e-4)
    return np.maximum(2.0 / r2 - 2.0, 0.0)


def brdf_blinn_phong(pt: SurfacePoint, l, v) -> np.ndarray:
    """Energy-normalized Blinn-Phong: ``a/pi + s (N+2)/(2pi) <n.h>^N``."""
    nl = _dot(pt.normal, l)
    h = _normalize(l + v)
    nh = np.maximum(_dot(pt.normal, h), 0.0)
    shin = blinn_phong_shininess(pt.roughness)
    spec = np.asarray(pt.specular) * (shin + 2.0) / (2.0 * np.pi) * nh**shin
    f = pt.albedo / np.pi + spec[..., None]
    return np.where((nl > 0.0)[..., None], f, 0.0)


def ggx_ndf(n_dot_h, alpha):
    """Trowbridge-Reitz normal distribution ``D``."""
    a2 = alpha * alpha
    d = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0
    return a2 / (np.pi * d * d)


def smith_lambda(cos_t, alpha):
    cos2 = cos_t * cos_t
    tan2 = np.maximum(1.0 - cos2, 0.0) / cos2
    return 0.5 * (np.sqrt(1.0 + alpha * alpha * tan2) - 1.0)


def smith_g2(n_dot_l, n_dot_v, alpha):
    """Height-correlated Smith masking-shadowing."""
    return 1.0 / (1.0 + smith_lambda(n_dot_l, alpha) + smith_lambda(n_dot_v, alpha))


def fresnel_schlick(h_dot_v, f0):
    return f0 + (1.0 - f0) * (1.0 - h_dot_v) ** 5


def ggx_alpha(roughness):
    return np.maximum(np.asarray(roughness) ** 2, MIN_ALPHA)


def ggx_specular(pt: SurfacePoint, l, v) -> np.ndarray:
    """Microfacet specular lobe ``D G F / (4 <n.l> <n.v>)``, zero below either horizon."""
    n = pt.normal
    nl = _dot(n, l)
    nv = _dot(n, v)
    if log.isEnabledFor(logging.DEBUG) and np.any(nv <= GRAZING_EPS):
        log.debug("ggx: %d grazing view directions clamped", int(np.sum(nv <= GRAZING_EPS)))
    nv_c = np.maximum(nv, GRAZING_EPS)
    nl_c = np.maximum(nl, GRAZING_EPS)
    h = _normalize(l + v)
    nh = np.clip(_dot(n, h), 0.0, 1.0)
    hv = np.clip(_dot(h, v), 0.0, 1.0)
    alpha = ggx_alpha(pt.roughness)
    f0 = F0_SCALE * np.asarray(pt.specular)
    spec = ggx_ndf(nh, alpha) * smith_g2(nl_c, nv_c, alpha) * fresnel_schlick(hv, f0)
    spec = spec / (4.0 * nl_c * nv_c)
    return np.where(nl > 0.0, spec, 0.0)


def brdf_ggx(pt: SurfacePoint, l, v) -> np.ndarray:
    """Lambertian diffuse plus GGX specular, ``[..., 3]``."""
    nl = _dot(pt.normal, l)
    f = pt.albedo / np.pi + ggx_specular(pt, l, v)[..., None]
    return np.where((nl > 0.0)[..., None], f, 0.0)


MODELS = {"blinn-phong": brdf_blinn_phong, "ggx": brdf_ggx}


def shade_classical(pt: SurfacePoint, v, samples: LightSample, model: str = "ggx",
                    visibility=None) -> np.ndarray:
    """Uniform-hemisphere estimate of outgoing radiance, unclamped.

    ``samples`` carry a sample axis just before the vector axis (``[..., N, 3]``);
    ``pt`` and ``v`` hold one entry per shading point.  ``visibility`` (``[..., N]``,
    0 or 1) zeroes occluded samples.  The estimator is
    ``(2 pi / N) sum_i f(l_i, v) L_i <n.l_i>_+``; clamp to [0, 1] when assembling images.
    """
    brdf = MODELS[model]
    v = np.asarray(v)
    f = brdf(pt.expand(), samples.direction, v[..., None, :])
    cos = np.maximum(_dot(pt.normal[..., None, :], samples.direction), 0.0)
    w = cos if visibility is None else cos * visibility
    contrib = f * samples.radiance * w[..., None]
    n = samples.direction.shape[-2]
    return contrib.sum(axis=-2) * (2.0 * np.pi / n)


# -- image-level rendering -------------------------------------------------------------------

PIXEL_CHUNK = 256
SHADE_STREAM = 0x5A4D


def surface_arrays(g, idx: np.ndarray, dtype=np.float32) -> SurfacePoint:
    """Gather a :class:`SurfacePoint` batch from G-buffer pixels at linear indices ``idx``."""
    def flat(plane):
        d = plane.data.reshape(-1, plane.channels)[idx].astype(dtype)
        return d if plane.channels == 3 else d[:, 0]
    return SurfacePoint(flat(g.albedo), flat(g.normal), flat(g.specular), flat(g.roughness))


def light_samples(env, normals: np.ndarray, idx: np.ndarray, rays: int, rng) -> LightSample:
    """Per-pixel uniform hemisphere samples with radiance looked up in ``env``.

    Stream ids are the pixels' linear indices, so a pixel always sees the same rays no
    matter which chunk or worker handles it.
    """
    from .envmap import lookup
    from .sampling import sample_uniform_hemisphere

    dirs = sample_uniform_hemisphere(normals, rays, rng, streams=idx.astype(np.uint64),
                                     dtype=normals.dtype)
    return LightSample(dirs, lookup(env, dirs).astype(normals.dtype))


def render_classical(g, cam, env, rays: int, rng, model: str = "ggx", intensity_scale=1.0,
                     visibility_fn=None, pixels=None) -> np.ndarray:
    """Shade every foreground pixel of ``g`` with a classical BRDF; returns unclamped ``(H, W, 3)``.

    ``visibility_fn(points, normals, dirs) -> [P, N]`` optionally masks occluded samples.
    """
    from .core import foreground_indices
    from .sampling import view_directions

    dtype = g.normal.data.dtype
    out = np.zeros((g.height * g.width, 3), dtype)
    idx_all = foreground_indices(g) if pixels is None else np.asarray(pixels)
    views = view_directions(cam, dtype).reshape(-1, 3)
    depth = g.depth.data.reshape(-1)
    rng = rng.split(SHADE_STREAM)
    for start in range(0, len(idx_all), PIXEL_CHUNK):
        idx = idx_all[start:start + PIXEL_CHUNK]
        pt = surface_arrays(g, idx, dtype)
        samples = light_samples(env, pt.normal, idx, rays, rng)
        vis = None
        if visibility_fn is not None:
            points = -views[idx] * depth[idx, None]
            vis = visibility_fn(points, pt.normal, samples.direction).astype(dtype)
        out[idx] = shade_classical(pt, views[idx], samples, model, vis) * dtype.type(intensity_scale)
    return out.reshape(g.height, g.width, 3)
