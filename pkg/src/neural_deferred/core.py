"""Image and G-buffer containers, plus PFM/PNG serialization of float planes."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

PLANES = ("albedo", "normal", "specular", "roughness", "depth", "ao", "mask")
PLANE_CHANNELS = {
    "albedo": 3,
    "normal": 3,
    "specular": 1,
    "roughness": 1,
    "depth": 1,
    "ao": 1,
    "mask": 1,
}
UNIT_NORM_TOL = 1e-4


class ContractError(ValueError):
    """Raised when an input violates a documented data contract."""


@dataclass(frozen=True)
class Image:
    """Row-major ``(height, width, channels)`` float image, read-only after construction."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ContractError(f"image must be HxWx1 or HxWx3, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float32)
        if not np.all(np.isfinite(data)):
            raise ContractError("image contains non-finite values")
        data = np.array(data, copy=True)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @classmethod
    def zeros(cls, height: int, width: int, channels: int = 3, dtype=np.float32) -> Image:
        return cls(np.zeros((height, width, channels), dtype=dtype))


class PixelCoord(NamedTuple):
    x: int
    y: int


class Violation(NamedTuple):
    plane: str
    pixel: PixelCoord | None
    rule: str


@dataclass(frozen=True)
class GBuffer:
    albedo: Image
    normal: Image
    specular: Image
    roughness: Image
    depth: Image
    ao: Image
    mask: Image
    _shape: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in PLANES:
            plane = getattr(self, name)
            if not isinstance(plane, Image):
                object.__setattr__(self, name, Image(plane))
        object.__setattr__(self, "_shape", (self.albedo.height, self.albedo.width))

    @property
    def height(self) -> int:
        return self._shape[0]

    @property
    def width(self) -> int:
        return self._shape[1]

    @property
    def foreground(self) -> np.ndarray:
        """Boolean ``(H, W)`` foreground mask."""
        return self.mask.data[:, :, 0] > 0.5

    def planes(self) -> dict[str, Image]:
        return {name: getattr(self, name) for name in PLANES}


def _pixels(bad: np.ndarray) -> list[PixelCoord]:
    ys, xs = np.nonzero(bad)
    return [PixelCoord(int(x), int(y)) for y, x in zip(ys, xs)]


def validate_gbuffer(g: GBuffer) -> list[Violation]:
    """Return every invariant violation in ``g``; an empty list means the buffer is valid."""
    found: list[Violation] = []
    h, w = g.height, g.width
    for name in PLANES:
        plane = getattr(g, name)
        if (plane.height, plane.width) != (h, w):
            found.append(Violation(name, None, f"resolution {plane.width}x{plane.height} != {w}x{h}"))
        if plane.channels != PLANE_CHANNELS[name]:
            found.append(Violation(name, None, f"expected {PLANE_CHANNELS[name]} channels"))
    if found:
        return found

    for name in ("albedo", "specular", "roughness", "ao"):
        data = getattr(g, name).data
        bad = np.any((data < 0.0) | (data > 1.0), axis=2)
        found += [Violation(name, p, "value outside [0, 1]") for p in _pixels(bad)]

    m = g.mask.data[:, :, 0]
    found += [Violation("mask", p, "value not in {0, 1}") for p in _pixels((m != 0.0) & (m != 1.0))]
    found += [Violation("depth", p, "negative depth") for p in _pixels(g.depth.data[:, :, 0] < 0.0)]

    norms = np.linalg.norm(g.normal.data.astype(np.float64), axis=2)
    bad = (m == 1.0) & (np.abs(norms - 1.0) > UNIT_NORM_TOL)
    found += [Violation("normal", p, "normal not unit length") for p in _pixels(bad)]
    bad = np.any(np.abs(g.normal.data) > 1.0 + UNIT_NORM_TOL, axis=2)
    found += [Violation("normal", p, "component outside [-1, 1]") for p in _pixels(bad)]
    return found


def foreground_pixels(g: GBuffer) -> list[PixelCoord]:
    """Masked-in pixels in row-major order."""
    return _pixels(g.foreground)


def foreground_indices(g: GBuffer) -> np.ndarray:
    """Row-major linear indices ``y * width + x`` of masked-in pixels."""
    return np.flatnonzero(g.foreground.ravel())


# -- serialization ---------------------------------------------------------------------------


def write_pfm(path: str | Path, data: np.ndarray) -> None:
    """Write an ``(H, W)``, ``(H, W, 1)`` or ``(H, W, 3)`` array as little-endian PFM."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        data = data[:, :, None]
    h, w, c = data.shape
    if c not in (1, 3):
        raise ContractError(f"PFM needs 1 or 3 channels, got {c}")
    header = f"{'PF' if c == 3 else 'Pf'}\n{w} {h}\n-1.0\n".encode("ascii")
    body = np.ascontiguousarray(data[::-1]).astype("<f4").tobytes()
    Path(path).write_bytes(header + body)


def read_pfm(path: str | Path) -> np.ndarray:
    """Read a PFM file into an ``(H, W, C)`` float32 array (top row first)."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4:
        raise ContractError(f"{path}: truncated PFM header")
    magic, dims, scale_line, body = parts
    if magic == b"PF":
        c = 3
    elif magic == b"Pf":
        c = 1
    else:
        raise ContractError(f"{path}: bad PFM magic {magic!r}")
    try:
        w, h = (int(t) for t in dims.split())
        scale = float(scale_line)
    except ValueError as exc:
        raise ContractError(f"{path}: malformed PFM header") from exc
    if w <= 0 or h <= 0 or scale == 0.0:
        raise ContractError(f"{path}: malformed PFM header")
    dtype = "<f4" if scale < 0 else ">f4"
    n = w * h * c
    if len(body) != 4 * n:
        raise ContractError(f"{path}: expected {4 * n} data bytes, found {len(body)}")
    data = np.frombuffer(body, dtype=dtype).reshape(h, w, c)[::-1]
    return data.astype(np.float32)


def srgb_encode(linear: np.ndarray) -> np.ndarray:
    x = np.clip(linear, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)


def save_png(path: str | Path, linear: np.ndarray) -> None:
    """Save a linear-radiance image as an 8-bit sRGB PNG preview."""
    from PIL import Image as PILImage

    data = np.asarray(linear)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    encoded = np.round(srgb_encode(data) * 255.0).astype(np.uint8)
    PILImage.fromarray(encoded).save(path)


def save_image(path: str | Path, image: Image | np.ndarray) -> None:
    """Write ``.pfm`` as raw floats, anything else as an sRGB PNG."""
    data = image.data if isinstance(image, Image) else np.asarray(image)
    if str(path).lower().endswith(".pfm"):
        write_pfm(path, data)
    else:
        save_png(path, data)

