"""A2U Lab affinity-aware upsampling - low-rank bilinear kernel generation"""
from .config import A2UConfig, A2UMode, ChannelSharing, DynamicKernel, Normalization
from .generate import (
    DynamicWeights,
    a2u_downsample_generate,
    a2u_generate,
    a2u_generate_dynamic_weights,
    a2u_logits,
    a2u_rank_maps,
    bilinear_oracle,
    normalize_kernels,
)
from .module import A2UUpsampler
from .params import A2UParams, a2u_param_count, a2u_param_specs

__all__ = [
    "A2UConfig",
    "A2UMode",
    "ChannelSharing",
    "DynamicKernel",
    "Normalization",
    "DynamicWeights",
    "a2u_downsample_generate",
    "a2u_generate",
    "a2u_generate_dynamic_weights",
    "a2u_logits",
    "a2u_rank_maps",
    "bilinear_oracle",
    "normalize_kernels",
    "A2UUpsampler",
    "A2UParams",
    "a2u_param_count",
    "a2u_param_specs",
]
