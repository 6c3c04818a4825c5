"""Equirectangular HDR environment maps: direction mapping, bilinear lookup, file I/O.

Convention: +y is up, the map center (u = 0.5) looks down -z, v = 0 is the zenith
row and u wraps at the +-x seam behind the viewer.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ContractError, read_pfm, write_pfm

UNIT_TOL = 1e-6


@dataclass(frozen=True)
class EnvironmentMap:
    radiance: np.ndarray  # (height, width, 3), non-negative

    def __post_init__(self):
        r = np.asarray(self.radiance)
        if r.ndim != 3 or r.shape[2] != 3:
            raise ContractError(f"environment map must be HxWx3, got {r.shape}")
        if r.shape[1] != 2 * r.shape[0]:
            raise ContractError(f"environment map must be 2:1, got {r.shape[1]}x{r.shape[0]}")
        if not np.all(np.isfinite(r)):
            raise ContractError("environment map contains non-finite texels")
        if np.any(r < 0):
            raise ContractError("environment map contains negative texels")
        r = np.array(r, copy=True)
        r.flags.writeable = False
        object.__setattr__(self, "radiance", r)

    @property
    def height(self) -> int:
        return self.radiance.shape[0]

    @property
    def width(self) -> int:
        return self.radiance.shape[1]

    def scaled(self, k: float) -> EnvironmentMap:
        return EnvironmentMap(self.radiance * np.asarray(k, self.radiance.dtype))

    def lookup(self, d: np.ndarray) -> np.ndarray:
        return lookup(self, d)


def _check_unit(d: np.ndarray) -> None:
    norms = np.linalg.norm(np.asarray(d, np.float64), axis=-1)
    # float32 directions carry ~1e-7 rounding per component.
    tol = UNIT_TOL if np.asarray(d).dtype == np.float64 else 1e-5
    if np.any(np.abs(norms - 1.0) > tol):
        raise ContractError("direction is not unit length")


def dir_to_uv(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Equirectangular texture coordinates of unit direction(s) ``d[..., 3]``."""
    d = np.asarray(d)
    _check_unit(d)
    u = np.arctan2(d[..., 0], -d[..., 2]) / (2.0 * np.pi) + 0.5
    v = np.arccos(np.clip(d[..., 1], -1.0, 1.0)) / np.pi
    u = np.where(u >= 1.0, u - 1.0, u)
    return u, v


def uv_to_dir(u, v) -> np.ndarray:
    """Inverse of :func:`dir_to_uv`."""
    u = np.asarray(u, np.float64)
    v = np.asarray(v, np.float64)
    if np.any((u < 0) | (u > 1) | (v < 0) | (v > 1)):
        raise ContractError("uv outside [0, 1]")
    phi = (u - 0.5) * 2.0 * np.pi
    theta = v * np.pi
    s = np.sin(theta)
    return np.stack([s * np.sin(phi), np.cos(theta), -s * np.cos(phi)], axis=-1)


def lookup(env: EnvironmentMap, d: np.ndarray) -> np.ndarray:
    """Bilinearly interpolated radiance along ``d[..., 3]``; wraps in u, clamps in v."""
    u, v = dir_to_uv(d)
    h, w = env.height, env.width
    x = u * w - 0.5
    y = v * h - 0.5
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = (x - x0).astype(env.radiance.dtype)[..., None]
    fy = (y - y0).astype(env.radiance.dtype)[..., None]
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    xa = np.mod(x0, w)
    xb = np.mod(x0 + 1, w)
    ya = np.clip(y0, 0, h - 1)
    yb = np.clip(y0 + 1, 0, h - 1)
    r = env.radiance
    top = r[ya, xa] * (1 - fx) + r[ya, xb] * fx
    bottom = r[yb, xa] * (1 - fx) + r[yb, xb] * fx
    return top * (1 - fy) + bottom * fy


def texel_directions(height: int, width: int) -> np.ndarray:
    """Unit directions through every texel center, shape ``(height, width, 3)``."""
    u = (np.arange(width) + 0.5) / width
    v = (np.arange(height) + 0.5) / height
    uu, vv = np.meshgrid(u, v)
    return uv_to_dir(uu, vv)


# -- file I/O --------------------------------------------------------------------------------


def save_pfm(env: EnvironmentMap, path: str | Path) -> None:
    write_pfm(path, env.radiance)


def load_pfm(path: str | Path) -> EnvironmentMap:
    raw = Path(path).read_bytes()
    if not raw.startswith(b"PF\n"):
        raise ContractError(f"{path}: environment maps must be 3-channel 'PF' files")
    return EnvironmentMap(read_pfm(path))


def _rgbe_to_float(rgbe: np.ndarray) -> np.ndarray:
    rgbe = rgbe.astype(np.int32)
    e = rgbe[..., 3]
    scale = np.where(e > 0, np.ldexp(1.0, e - (128 + 8)), 0.0)
    return (rgbe[..., :3] + 0.5 * (e[..., None] > 0)) * scale[..., None]


def _read_scanline(buf: memoryview, pos: int, width: int) -> tuple[np.ndarray, int]:
    if (8 <= width < 32768 and buf[pos] == 2 and buf[pos + 1] == 2
            and (buf[pos + 2] << 8 | buf[pos + 3]) == width and buf[pos + 2] < 128):
        pos += 4
        line = np.empty((4, width), np.uint8)
        for c in range(4):
            i = 0
            while i < width:
                count = buf[pos]
                pos += 1
                if count > 128:
                    count -= 128
                    if i + count > width:
                        raise ContractError("RGBE run overflows scanline")
                    line[c, i:i + count] = buf[pos]
                    pos += 1
                else:
                    if count == 0 or i + count > width:
                        raise ContractError("bad RGBE literal run")
                    line[c, i:i + count] = np.frombuffer(buf[pos:pos + count], np.uint8)
                    pos += count
                i += count
        return line.T, pos
    # flat (or old-style) scanline: plain 4-byte pixels
    n = 4 * width
    if pos + n > len(buf):
        raise ContractError("truncated RGBE data")
    return np.frombuffer(buf[pos:pos + n], np.uint8).reshape(width, 4), pos + n


def load_hdr(path: str | Path) -> EnvironmentMap:
    """Read a Radiance RGBE ``.hdr`` file (flat or RLE scanlines, ``-Y h +X w`` layout)."""
    raw = Path(path).read_bytes()
    if not (raw.startswith(b"#?RADIANCE") or raw.startswith(b"#?RGBE")):
        raise ContractError(f"{path}: not a Radiance HDR file")
    end = raw.find(b"\n\n")
    if end < 0:
        raise ContractError(f"{path}: missing header terminator")
    header = raw[:end].decode("ascii", "replace")
    if "FORMAT=" in header and "32-bit_rle_rgbe" not in header:
        raise ContractError(f"{path}: unsupported pixel format")
    nl = raw.find(b"\n", end + 2)
    m = re.fullmatch(rb"-Y (\d+) \+X (\d+)", raw[end + 2:nl].strip())
    if m is None:
        raise ContractError(f"{path}: unsupported resolution line")
    h, w = int(m.group(1)), int(m.group(2))
    buf = memoryview(raw)
    pos = nl + 1
    pixels = np.empty((h, w, 4), np.uint8)
    for y in range(h):
        pixels[y], pos = _read_scanline(buf, pos, w)
    exposure = 1.0
    for line in header.splitlines():
        if line.startswith("EXPOSURE="):
            exposure *= float(line.split("=", 1)[1])
    radiance = (_rgbe_to_float(pixels) / exposure).astype(np.float32)
    return EnvironmentMap(radiance)


def load_envmap(path: str | Path, exposure: float = 1.0) -> EnvironmentMap:
    """Load ``.pfm`` or ``.hdr`` by extension and multiply by ``exposure``."""
    env = load_hdr(path) if str(path).lower().endswith(".hdr") else load_pfm(path)
    return env if exposure == 1.0 else env.scaled(exposure)
