"""Foreground-masked image quality metrics: MSE, PSNR and single-scale SSIM."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import Image

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _arrays(a, b, mask):
    a = np.asarray(a.data if isinstance(a, Image) else a, np.float64)
    b = np.asarray(b.data if isinstance(b, Image) else b, np.float64)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if mask is None:
        m = np.ones(a.shape[:2], bool)
    else:
        m = np.asarray(mask.data if isinstance(mask, Image) else mask)
        m = (m.reshape(a.shape[:2]) > 0.5) if m.dtype != bool else m.reshape(a.shape[:2])
    return a, b, m


def mse(a, b, mask=None) -> float:
    """Mean squared error over masked pixels and all channels."""
    a, b, m = _arrays(a, b, mask)
    if not m.any():
        raise ValueError("empty mask")
    return float(np.mean((a[m] - b[m]) ** 2))


def psnr_from_mse(err: float) -> float:
    if err < 1e-10:
        return PSNR_CAP
    return float(10.0 * np.log10(1.0 / err))


def psnr(a, b, mask=None) -> float:
    """Peak signal-to-noise ratio for unit-range images, capped at 99 dB."""
    return psnr_from_mse(mse(a, b, mask))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(x, g):
    k = len(g)
    rows = sliding_window_view(x, k, axis=0) @ g
    return sliding_window_view(rows, k, axis=1) @ g


def ssim_map(a, b) -> np.ndarray:
    """Per-window SSIM of 2-D arrays over the region where the window fits entirely."""
    g = gaussian_window()
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a * mu_a
    sbb = _filter_valid(b * b, g) - mu_b * mu_b
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2)
    return num / den


def ssim(a, b, mask=None) -> float:
    """Mean SSIM over windows centered on masked pixels, averaged over channels.

    Masked-out pixels are zeroed in both images first, so background content cannot leak
    into windows that straddle the mask edge.
    """
    a, b, m = _arrays(a, b, mask)
    a = np.where(m[..., None], a, 0.0)
    b = np.where(m[..., None], b, 0.0)
    h, w = a.shape[:2]
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValueError(f"image {w}x{h} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    r = SSIM_WINDOW // 2
    centers = m[r:h - r, r:w - r]
    if not centers.any():
        raise ValueError("no masked pixel has a full SSIM window")
    vals = [ssim_map(a[..., c], b[..., c])[centers].mean() for c in range(a.shape[2])]
    return float(np.mean(vals))


def evaluate(pred, gt, mask=None) -> dict:
    err = mse(pred, gt, mask)
    return {"mse": err, "psnr": psnr_from_mse(err), "ssim": ssim(pred, gt, mask)}
