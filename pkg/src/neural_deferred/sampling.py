"""Counter-based random streams, hemisphere sampling and pinhole camera rays.

Every random number is a pure function of ``(seed, stream key, counter)``, so any
subset of pixels can be drawn in any order or on any worker and still produce the
same values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ContractError, PixelCoord

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps.
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


def _mix_int(*values: int) -> int:
    acc = np.uint64(0)
    with np.errstate(over="ignore"):
        for v in values:
            acc = _mix(acc + _GOLDEN + np.uint64(v & _MASK64))
    return int(acc)


@dataclass(frozen=True)
class Rng:
    """Stateless keyed generator: ``state`` is the 64-bit stream key derived from ``seed``."""

    seed: int
    state: int | None = None

    def __post_init__(self):
        if self.state is None:
            object.__setattr__(self, "state", _mix_int(self.seed))

    def split(self, *keys: int) -> Rng:
        """Child stream keyed by ``keys`` (e.g. an epoch number or a purpose tag)."""
        return Rng(self.seed, _mix_int(self.state, *keys))

    def _bits(self, streams: np.ndarray, count: int) -> np.ndarray:
        streams = np.asarray(streams, dtype=np.uint64)
        with np.errstate(over="ignore"):
            keys = _mix(np.uint64(self.state) ^ _mix(streams + _GOLDEN))
            ctr = np.arange(count, dtype=np.uint64) * _GOLDEN
            return _mix(keys[..., None] + ctr + _GOLDEN)

    def uniform_streams(self, streams: np.ndarray, count: int, dtype=np.float64) -> np.ndarray:
        """Uniforms in [0, 1), shape ``streams.shape + (count,)``; one independent stream per id."""
        bits = self._bits(streams, count)
        if np.dtype(dtype) == np.float32:
            return (bits >> np.uint64(40)).astype(np.float32) * np.float32(2.0**-24)
        return (bits >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def uniform(self, shape, dtype=np.float64) -> np.ndarray:
        n = int(np.prod(shape))
        return self.uniform_streams(np.zeros((), np.uint64), n, dtype).reshape(shape)

    def generator(self) -> np.random.Generator:
        """Sequential numpy generator keyed by this stream, for non-parallel draws."""
        return np.random.Generator(np.random.Philox(key=self.state))


@dataclass(frozen=True)
class Camera:
    """Pinhole camera at the origin looking down -z with +y up."""

    fov_y: float
    width: int
    height: int

    def __post_init__(self):
        if not 0.0 < self.fov_y < np.pi:
            raise ContractError(f"fov_y must lie in (0, pi), got {self.fov_y}")
        if self.width < 1 or self.height < 1:
            raise ContractError("camera resolution must be positive")

    def ray_directions(self, dtype=np.float64) -> np.ndarray:
        """Unit primary-ray directions through every pixel center, shape ``(H, W, 3)``."""
        xs = np.arange(self.width, dtype=np.float64)
        ys = np.arange(self.height, dtype=np.float64)
        px, py = np.meshgrid(xs, ys)
        return self._directions(px, py).astype(dtype)

    def _directions(self, px, py) -> np.ndarray:
        tan_half = np.tan(0.5 * self.fov_y)
        aspect = self.width / self.height
        sx = (2.0 * (np.asarray(px, np.float64) + 0.5) / self.width - 1.0) * tan_half * aspect
        sy = (1.0 - 2.0 * (np.asarray(py, np.float64) + 0.5) / self.height) * tan_half
        d = np.stack([sx, sy, -np.ones_like(sx)], axis=-1)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)


def view_direction(cam: Camera, p: PixelCoord, depth: float) -> np.ndarray:
    """Unit vector from the surface point seen through ``p`` back toward the camera."""
    if depth <= 0.0:
        raise ContractError(f"depth must be positive, got {depth}")
    if not (0 <= p.x < cam.width and 0 <= p.y < cam.height):
        raise ContractError(f"pixel {p} outside {cam.width}x{cam.height}")
    point = depth * cam._directions(p.x, p.y)
    return -point / np.linalg.norm(point)


def view_directions(cam: Camera, dtype=np.float64) -> np.ndarray:
    """``view_direction`` for every pixel at once; depth cancels for a pinhole at the origin."""
    return -cam.ray_directions(dtype)


def tangent_frame(n: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-handed orthonormal ``(t, b, n)`` around unit normals ``n[..., 3]``.

    Branch-free construction of Duff et al. (2017); discontinuous only where n.z
    changes sign.
    """
    n = np.asarray(n)
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    sign = np.copysign(np.ones_like(z), z)
    a = -1.0 / (sign + z)
    b = x * y * a
    t = np.stack([1.0 + sign * x * x * a, sign * b, -sign * x], axis=-1)
    bt = np.stack([b, sign + y * y * a, -y], axis=-1)
    return t, bt, n


def uniform_hemisphere_local(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """Map unit-square samples to the +z hemisphere with uniform area density 1/(2 pi)."""
    cos_t = u1
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
    phi = 2.0 * np.pi * u2
    return np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=-1)


def sample_uniform_hemisphere(n: np.ndarray, count: int, rng: Rng, streams=None,
                              dtype=np.float64) -> np.ndarray:
    """Uniformly distributed unit directions on the hemisphere around ``n``.

    ``n`` is a single normal ``(3,)`` or a batch ``(P, 3)``; the result has shape
    ``(count, 3)`` or ``(P, count, 3)``.  ``streams`` gives one RNG stream id per
    normal (defaults to ``0..P-1``).
    """
    if count < 1:
        raise ContractError("count must be >= 1")
    n = np.asarray(n, dtype=dtype)
    single = n.ndim == 1
    nb = n[None] if single else n
    if streams is None:
        streams = np.arange(nb.shape[0], dtype=np.uint64)
    u = rng.uniform_streams(np.asarray(streams, np.uint64), 2 * count, dtype)
    local = uniform_hemisphere_local(u[:, 0::2], u[:, 1::2]).astype(dtype)
    t, b, nn = tangent_frame(nb)
    out = (local[..., 0:1] * t[:, None] + local[..., 1:2] * b[:, None]
           + local[..., 2:3] * nn[:, None])
    return out[0] if single else out
