"""
A2U kernel generation

Second-order kernels from a low-rank bilinear model of the pairing feature:
two depthwise stride-r encodings (U on X, V on Y) multiplied elementwise and
summed over channels give d rank maps at low resolution; a projection P
turns them into s_u² kernel logits per high-resolution position.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ConfigValidationError, ShapeError
from ..nn import NormMode, batchnorm2d
from ..tensor import (
    ConvSpec,
    Tensor,
    conv2d,
    encoder_padding,
    global_avg_pool,
    hadamard,
    pad2d,
    per_sample_depthwise,
    per_sample_pointwise,
    permute,
    pixel_shuffle,
    relu,
    repeat,
    reshape,
    sigmoid,
    softmax,
    sum as tsum,
)
from ..upsampling import Direction, KernelMap
from .config import A2UConfig, A2UMode, ChannelSharing, Normalization
from .params import A2UParams, BranchNorm, generator_spec, projection_spec


@dataclass
class DynamicWeights:
    """Per-sample effective weights; batch entries never share state."""
    p: Tensor                      # [N, P_out, d]
    u: Optional[Tensor] = None     # [N, C, m, kd, kd]
    v: Optional[Tensor] = None
    p_down: Optional[Tensor] = None  # [N, s_d², m]


def bilinear_oracle(x: np.ndarray, y: np.ndarray, a: np.ndarray) -> float:
    """
    w = Σ_k x_kᵀ A_k y_k by explicit loops in float64.

    x: [C, N], y: [C, M], a: [C, N, M]. Reference only.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or a.shape != (x.shape[0], x.shape[1], y.shape[1]) or x.shape[0] != y.shape[0]:
        raise ShapeError(f"bilinear_oracle: inconsistent shapes x{x.shape} y{y.shape} a{a.shape}")
    total = 0.0
    for k in range(x.shape[0]):
        for i in range(x.shape[1]):
            for j in range(y.shape[1]):
                total += x[k, i] * a[k, i, j] * y[k, j]
    return total


# ═══════════════════════════════════════════════════════════════════════════════
# ENCODINGS
# ═══════════════════════════════════════════════════════════════════════════════

def _check_inputs(x: Tensor, y: Tensor, params: A2UParams, cfg: A2UConfig) -> None:
    if x.ndim != 4 or x.shape != y.shape:
        raise ShapeError(f"pairing features must be equal NCHW shapes, got {x.shape} and {y.shape}")
    _, c, h, w = x.shape
    if c != params.channels:
        raise ShapeError(f"feature has {c} channels, params were built for {params.channels}")
    if h % cfg.ratio or w % cfg.ratio:
        raise ShapeError(f"feature size {h}x{w} not divisible by r={cfg.ratio}")
    if params.cfg != cfg:
        raise ConfigValidationError("params were built for a different A2U config")


def _encode_static(x: Tensor, weight: Tensor, cfg: A2UConfig) -> Tensor:
    """Depthwise stride-r encoding → [N, C·m, h, w], channel c·m + j."""
    c = x.shape[1]
    m, k, r = cfg.low_res_maps, cfg.k_en, cfg.ratio
    if cfg.channel == ChannelSharing.SHARED:
        weight = repeat(weight, axis=0, times=c)
    weight = reshape(weight, (c * m, 1, k, k))
    before, after = encoder_padding(k, r)
    spec = ConvSpec.square(c, c * m, k, stride=r, groups=c, has_bias=False)
    return conv2d(pad2d(x, before, after, before, after), spec, weight)


def _encode_dynamic(x: Tensor, weight: Tensor, cfg: A2UConfig) -> Tensor:
    kd = weight.shape[-1]
    before, after = encoder_padding(kd, cfg.ratio)
    return per_sample_depthwise(pad2d(x, before, after, before, after), weight, stride=cfg.ratio)


def _branch_norm(encoded: Tensor, norm: Optional[BranchNorm], training: bool) -> Tensor:
    if norm is None:
        return encoded
    mode = NormMode.TRAIN if training else NormMode.EVAL
    return relu(batchnorm2d(encoded, norm.gamma, norm.beta, norm.state, mode))


def a2u_generate_dynamic_weights(x: Tensor, params: A2UParams, cfg: A2UConfig) -> DynamicWeights:
    """GAP(X) mapped to per-sample P (hybrid, dynamic) and U, V (dynamic)."""
    if cfg.mode == A2UMode.STATIC:
        raise ConfigValidationError("dynamic weights requested for a static A2U config")
    n, c = x.shape[:2]
    g = global_avg_pool(x)
    o, d, m = cfg.projection_channels, cfg.rank, cfg.low_res_maps

    p = reshape(conv2d(g, generator_spec(c, o * d), params.p_gen), (n, o, d))
    weights = DynamicWeights(p=p)

    if cfg.mode == A2UMode.DYNAMIC:
        kd = cfg.dynamic_kernel_side
        c_enc = c if cfg.channel == ChannelSharing.WISE else 1
        for branch, gen in (("u", params.u_gen), ("v", params.v_gen)):
            flat = conv2d(g, generator_spec(c, c_enc * m * kd * kd), gen)
            kernel = reshape(flat, (n, c_enc, m, kd, kd))
            if c_enc == 1:
                kernel = repeat(kernel, axis=1, times=c)
            setattr(weights, branch, kernel)

    if cfg.paired_down:
        s_d2 = cfg.down_side ** 2
        flat = conv2d(g, generator_spec(c, s_d2 * m), params.p_down_gen)
        weights.p_down = reshape(flat, (n, s_d2, m))
    return weights


def a2u_rank_maps(
    x: Tensor,
    y: Tensor,
    params: A2UParams,
    cfg: A2UConfig,
    dynamic: Optional[DynamicWeights] = None,
    training: bool = False,
    force_unit_branch_a: bool = False,
) -> Tensor:
    """Σ_c (U ⋆ X) ⊙ (V ⋆ Y) → [N, m, H/r, W/r], channel set·d + rank."""
    n, c = x.shape[:2]
    if cfg.mode == A2UMode.DYNAMIC:
        a = _encode_dynamic(x, dynamic.u, cfg)
        b = _encode_dynamic(y, dynamic.v, cfg)
    else:
        a = _encode_static(x, params.u, cfg)
        b = _encode_static(y, params.v, cfg)
    a = _branch_norm(a, params.bn_u, training)
    b = _branch_norm(b, params.bn_v, training)
    if cfg.u_sigmoid:
        a = sigmoid(a)
    if force_unit_branch_a:
        a = Tensor(np.ones(a.shape), dtype=a.dtype)

    m = cfg.low_res_maps
    h, w = a.shape[2:]
    product = reshape(hadamard(a, b), (n, c, m, h, w))
    return tsum(product, axis=1)


def _project(maps: Tensor, static_weight: Optional[Tensor], dynamic_weight: Optional[Tensor], outputs: int) -> Tensor:
    if dynamic_weight is not None:
        return per_sample_pointwise(maps, dynamic_weight)
    return conv2d(maps, projection_spec(maps.shape[1], outputs), static_weight)


# ═══════════════════════════════════════════════════════════════════════════════
# UPSAMPLING KERNELS
# ═══════════════════════════════════════════════════════════════════════════════

def a2u_logits(
    x: Tensor,
    y: Tensor,
    params: A2UParams,
    cfg: A2UConfig,
    training: bool = False,
    force_unit_branch_a: bool = False,
) -> Tensor:
    """Raw kernel logits [N, s_u², H, W] before normalization."""
    _check_inputs(x, y, params, cfg)
    dynamic = None if cfg.mode == A2UMode.STATIC else a2u_generate_dynamic_weights(x, params, cfg)
    maps = a2u_rank_maps(x, y, params, cfg, dynamic, training, force_unit_branch_a)
    r, d = cfg.ratio, cfg.rank
    p_dynamic = dynamic.p if dynamic is not None else None

    if not cfg.pointwise:
        projected = _project(maps, params.p, p_dynamic, cfg.projection_channels)
        return pixel_shuffle(projected, r)

    n, _, h, w = maps.shape
    sets = cfg.weight_sets
    interleaved = reshape(permute(reshape(maps, (n, sets, d, h, w)), (0, 2, 1, 3, 4)), (n, d * sets, h, w))
    full = pixel_shuffle(interleaved, r)
    return _project(full, params.p, p_dynamic, cfg.projection_channels)


def normalize_kernels(logits: Tensor, cfg: A2UConfig, s: int) -> Tensor:
    """Per-position normalization over the s² axis; a singleton window uses sigmoid alone."""
    if s == 1 and cfg.singleton_sigmoid:
        return sigmoid(logits)
    if cfg.normalization == Normalization.SIGMOID_SOFTMAX:
        logits = sigmoid(logits)
    return softmax(logits, axis=1)


def a2u_generate(
    x: Tensor,
    y: Tensor,
    params: A2UParams,
    cfg: A2UConfig,
    training: bool = False,
) -> KernelMap:
    logits = a2u_logits(x, y, params, cfg, training=training)
    return KernelMap(kernels=normalize_kernels(logits, cfg, cfg.s_u), s=cfg.s_u, r=cfg.ratio, direction=Direction.UP)


def a2u_downsample_generate(x: Tensor, params: A2UParams, cfg: A2UConfig, training: bool = False) -> KernelMap:
    """Paired downsampling kernels: same U, V rank maps, separate projection P_d."""
    if not cfg.paired_down:
        raise ConfigValidationError(f"A2U variant {cfg.variant} is not configured for paired downsampling")
    _check_inputs(x, x, params, cfg)
    dynamic = None if cfg.mode == A2UMode.STATIC else a2u_generate_dynamic_weights(x, params, cfg)
    maps = a2u_rank_maps(x, x, params, cfg, dynamic, training)
    s_d = cfg.down_side
    p_dynamic = dynamic.p_down if dynamic is not None else None
    logits = _project(maps, params.p_down, p_dynamic, s_d * s_d)
    return KernelMap(kernels=normalize_kernels(logits, cfg, s_d), s=s_d, r=cfg.ratio, direction=Direction.DOWN)
