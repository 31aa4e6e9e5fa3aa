"""A2U Lab upsamplers - kernel application and reference upsampling operators"""
from .fixed import FixedKind, bilinear_kernel_weights, resample_bilinear, upsample_fixed
from .kernel_map import Direction, KernelMap, apply_kernel_map, window_padding
from .learned import (
    CarafeWeights,
    IndexNetWeights,
    carafe_generate,
    deconv_upsample,
    indexnet_generate,
    indexnet_logits,
    pixelshuffle_upsample,
)
from .modules import (
    CarafeUpsampler,
    DeconvUpsampler,
    FixedUpsampler,
    Guidance,
    IndexNetUpsampler,
    MaxUnpoolUpsampler,
    PixelShuffleUpsampler,
    StageUpsampler,
    UpsamplerKind,
)

__all__ = [
    "FixedKind",
    "bilinear_kernel_weights",
    "resample_bilinear",
    "upsample_fixed",
    "Direction",
    "KernelMap",
    "apply_kernel_map",
    "window_padding",
    "CarafeWeights",
    "IndexNetWeights",
    "carafe_generate",
    "deconv_upsample",
    "indexnet_generate",
    "indexnet_logits",
    "pixelshuffle_upsample",
    "CarafeUpsampler",
    "DeconvUpsampler",
    "FixedUpsampler",
    "Guidance",
    "IndexNetUpsampler",
    "MaxUnpoolUpsampler",
    "PixelShuffleUpsampler",
    "StageUpsampler",
    "UpsamplerKind",
]
