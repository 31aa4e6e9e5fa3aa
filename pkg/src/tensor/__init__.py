"""A2U Lab tensor core - dense NCHW arrays with tape-based reverse mode"""
from .gradcheck import grad_check, relative_error
from .ops import (
    ConvSpec,
    conv2d,
    conv_transpose2d,
    elementwise,
    encoder_padding,
    fold,
    global_avg_pool,
    hadamard,
    l1_loss,
    max_pool_2x2,
    max_unpool_2x2,
    nearest_upsample,
    pad2d,
    per_sample_depthwise,
    per_sample_pointwise,
    permute,
    pixel_shuffle,
    pixel_unshuffle,
    relu,
    repeat,
    reshape,
    sigmoid,
    softmax,
    sum,
    tanh,
    unfold,
    weighted_window_sum,
)
from .tensor import DEFAULT_DTYPE, Tape, Tensor, backward, current_tape, emit, no_tape

__all__ = [
    "DEFAULT_DTYPE",
    "Tape",
    "Tensor",
    "backward",
    "current_tape",
    "emit",
    "no_tape",
    "grad_check",
    "relative_error",
    "ConvSpec",
    "conv2d",
    "conv_transpose2d",
    "elementwise",
    "encoder_padding",
    "fold",
    "global_avg_pool",
    "hadamard",
    "l1_loss",
    "max_pool_2x2",
    "max_unpool_2x2",
    "nearest_upsample",
    "pad2d",
    "per_sample_depthwise",
    "per_sample_pointwise",
    "permute",
    "pixel_shuffle",
    "pixel_unshuffle",
    "relu",
    "repeat",
    "reshape",
    "sigmoid",
    "softmax",
    "sum",
    "tanh",
    "unfold",
    "weighted_window_sum",
]
