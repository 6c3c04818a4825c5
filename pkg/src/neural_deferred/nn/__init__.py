"""Hand-differentiated network kernels: dense, conv, activations, encoding, Adam."""

from .adam import AdamState, adam_step, clip_by_global_norm, global_norm
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .conv import conv_backward, conv_forward, conv_transpose_backward, conv_transpose_forward
from .layers import positional_encoding, relu, sigmoid
from .mlp import Mlp, MlpCache, mlp_backward, mlp_forward

__all__ = [
    "AdamState", "adam_step", "clip_by_global_norm", "global_norm",
    "Checkpoint", "CheckpointError", "load_checkpoint", "save_checkpoint",
    "conv_forward", "conv_backward", "conv_transpose_forward", "conv_transpose_backward",
    "positional_encoding", "relu", "sigmoid",
    "Mlp", "MlpCache", "mlp_forward", "mlp_backward",
]
