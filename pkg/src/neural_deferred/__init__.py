"""Deferred shading with a per-ray neural shader and a learned shadow map, in numpy.

The shading MLP sees one G-buffer pixel plus one incoming light ray at a time; a pixel's
color is the mean of its outputs over uniformly sampled hemisphere rays.  A small U-Net
then predicts a multiplicative shadow map.  Ground truth comes from a GGX ray tracer.
"""

from .core import ContractError, GBuffer, Image, PixelCoord, validate_gbuffer
from .envmap import EnvironmentMap, load_envmap
from .metrics import mse, psnr, ssim
from .neural_shader import make_shader_net, render_unshadowed
from .sampling import Camera, Rng
from .shading import render_classical
from .shadow_net import ShadowNet, apply_shadow, estimate_shadow
from .training import TrainConfig, train_phase1, train_phase2

__version__ = "0.1.0"

__all__ = [
    "Camera", "ContractError", "EnvironmentMap", "GBuffer", "Image", "PixelCoord", "Rng",
    "ShadowNet", "TrainConfig", "apply_shadow", "estimate_shadow", "load_envmap",
    "make_shader_net", "mse", "psnr", "render_classical", "render_unshadowed", "ssim",
    "train_phase1", "train_phase2", "validate_gbuffer",
]
