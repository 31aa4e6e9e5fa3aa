"""
Learned upsamplers - kernel generators and parametric upsampling layers

carafe_generate    content-aware kernels from the low-resolution decoder feature
indexnet_generate  holistic index maps from the high-resolution encoder feature
deconv_upsample    stride-r transposed convolution
pixelshuffle_upsample  3×3 conv to C·r² channels, then pixel shuffle
"""
from dataclasses import dataclass
from typing import Optional

from ..errors import ShapeError
from ..tensor import (
    ConvSpec,
    Tensor,
    conv2d,
    conv_transpose2d,
    encoder_padding,
    pad2d,
    pixel_shuffle,
    sigmoid,
    softmax,
)
from .kernel_map import Direction, KernelMap


@dataclass
class CarafeWeights:
    encoder_weight: Tensor
    encoder_bias: Optional[Tensor] = None
    compress_weight: Optional[Tensor] = None
    compress_bias: Optional[Tensor] = None


@dataclass
class IndexNetWeights:
    encoder_weight: Tensor


def carafe_encoder_spec(channels: int, k_up: int, k_enc: int, r: int, has_bias: bool = True) -> ConvSpec:
    return ConvSpec.square(channels, r * r * k_up * k_up, k_enc, has_bias=has_bias)


def carafe_generate(decoder_feat: Tensor, weights: CarafeWeights, k_up: int, k_enc: int, r: int) -> KernelMap:
    """Content encoder → pixel shuffle → softmax over the k_up² window."""
    feat = decoder_feat
    if weights.compress_weight is not None:
        compressed = weights.compress_weight.shape[0]
        spec = ConvSpec.square(feat.shape[1], compressed, 1, has_bias=weights.compress_bias is not None)
        feat = conv2d(feat, spec, weights.compress_weight, weights.compress_bias)

    spec = carafe_encoder_spec(feat.shape[1], k_up, k_enc, r, has_bias=weights.encoder_bias is not None)
    if weights.encoder_weight.shape != spec.weight_shape:
        raise ShapeError(
            f"carafe encoder weight {weights.encoder_weight.shape} does not produce r²·k_up² = "
            f"{spec.out_channels} channels from {spec.in_channels}"
        )
    before, after = encoder_padding(k_enc, 1)
    logits = conv2d(pad2d(feat, before, after, before, after), spec, weights.encoder_weight, weights.encoder_bias)
    kernels = softmax(pixel_shuffle(logits, r), axis=1)
    return KernelMap(kernels=kernels, s=k_up, r=r, direction=Direction.UP)


def indexnet_encoder_spec(channels: int, k_enc: int, stride: int) -> ConvSpec:
    return ConvSpec.square(channels, stride * stride, k_enc, stride=stride, has_bias=False)


def indexnet_logits(encoder_feat: Tensor, weights: IndexNetWeights, k_enc: int, stride: int) -> Tensor:
    """Pre-sigmoid index sets [N, stride², H/stride, W/stride]."""
    _, c, h, w = encoder_feat.shape
    if h % stride or w % stride:
        raise ShapeError(f"encoder feature {h}x{w} not divisible by stride {stride}")
    spec = indexnet_encoder_spec(c, k_enc, stride)
    if weights.encoder_weight.shape != spec.weight_shape:
        raise ShapeError(f"index encoder weight {weights.encoder_weight.shape} != {spec.weight_shape}")
    before, after = encoder_padding(k_enc, stride)
    return conv2d(pad2d(encoder_feat, before, after, before, after), spec, weights.encoder_weight)


def indexnet_generate(
    encoder_feat: Tensor,
    weights: IndexNetWeights,
    k_enc: int,
    stride: int,
) -> tuple[KernelMap, KernelMap]:
    """
    Holistic index maps.

    Returns:
        up: s=1 map at encoder resolution, one sigmoid scalar per position
        down: s=stride map at the pooled resolution, softmax over each stride×stride group
    """
    index = sigmoid(indexnet_logits(encoder_feat, weights, k_enc, stride))
    up = KernelMap(kernels=pixel_shuffle(index, stride), s=1, r=stride, direction=Direction.UP)
    down = KernelMap(kernels=softmax(index, axis=1), s=stride, r=stride, direction=Direction.DOWN)
    return up, down


def deconv_upsample(x: Tensor, weight: Tensor, bias: Optional[Tensor], r: int) -> Tensor:
    """Transposed convolution with a 2r×2r kernel, stride r, padding r/2."""
    if r % 2:
        raise ShapeError(f"deconv upsampling needs an even ratio, got r={r}")
    if weight.ndim != 4 or weight.shape[2:] != (2 * r, 2 * r):
        raise ShapeError(f"deconv weight must be [C_in, C_out, {2 * r}, {2 * r}], got {weight.shape}")
    return conv_transpose2d(x, weight, bias, stride=r, padding=r // 2)


def pixelshuffle_spec(channels: int, r: int) -> ConvSpec:
    return ConvSpec.square(channels, channels * r * r, 3, padding=1)


def pixelshuffle_upsample(x: Tensor, weight: Tensor, bias: Optional[Tensor], r: int) -> Tensor:
    spec = ConvSpec.square(x.shape[1], x.shape[1] * r * r, 3, padding=1, has_bias=bias is not None)
    if weight.shape != spec.weight_shape:
        raise ShapeError(f"pixel-shuffle conv weight {weight.shape} != {spec.weight_shape}")
    return pixel_shuffle(conv2d(x, spec, weight, bias), r)
