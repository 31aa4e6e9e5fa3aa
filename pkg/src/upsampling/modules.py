"""
Upsampler modules - one object per decoder stage

Each module declares its parameters (as ParamSpecs under its own prefix) and
upsamples a decoder feature, optionally reading guidance recorded by the
paired encoder stage. Modules that also own the paired downsampler
(IndexNet, paired A2U) expose `downsample`.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from ..errors import ConfigValidationError, ShapeError
from ..nn import ParamRegistry, ParamSpec
from ..nn.registry import conv_specs
from ..tensor import ConvSpec, Tensor, max_unpool_2x2
from .fixed import FixedKind, upsample_fixed
from .kernel_map import KernelMap, apply_kernel_map
from .learned import (
    CarafeWeights,
    IndexNetWeights,
    carafe_encoder_spec,
    carafe_generate,
    deconv_upsample,
    indexnet_encoder_spec,
    indexnet_generate,
    pixelshuffle_spec,
    pixelshuffle_upsample,
)


class UpsamplerKind(str, Enum):
    NEAREST = "nearest"
    BILINEAR = "bilinear"
    DECONV = "deconv"
    PIXEL_SHUFFLE = "ps"
    MAX_UNPOOL = "maxunpool"
    CARAFE = "carafe"
    INDEXNET = "indexnet"
    A2U = "a2u"


@dataclass
class Guidance:
    """What the paired encoder stage hands to its decoder stage."""
    feature: Optional[Tensor] = None
    pool_indices: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)


class StageUpsampler:
    """Base class: parameter-free ×r upsampler contract C×H×W → C×rH×rW."""

    kind: UpsamplerKind
    pairs_downsampling = False

    def __init__(self, name: str, channels: int, ratio: int = 2):
        if ratio < 1 or channels < 1:
            raise ConfigValidationError(f"invalid upsampler geometry channels={channels}, ratio={ratio}")
        self.name = name
        self.channels = channels
        self.ratio = ratio

    def param_specs(self) -> list[ParamSpec]:
        return []

    def upsample(
        self,
        params: ParamRegistry,
        feature: Tensor,
        guidance: Guidance,
        training: bool = False,
    ) -> tuple[Tensor, Optional[KernelMap]]:
        raise NotImplementedError

    def downsample(
        self,
        params: ParamRegistry,
        feature: Tensor,
        training: bool = False,
    ) -> tuple[Tensor, Optional[KernelMap]]:
        raise ConfigValidationError(f"{self.kind.value} upsampler has no paired downsampler")


class FixedUpsampler(StageUpsampler):
    def __init__(self, name: str, channels: int, ratio: int = 2, kind: FixedKind = FixedKind.NEAREST):
        super().__init__(name, channels, ratio)
        self.fixed = FixedKind(kind)
        self.kind = UpsamplerKind(self.fixed.value)

    def upsample(self, params, feature, guidance, training=False):
        return upsample_fixed(self.fixed, feature, self.ratio), None


class DeconvUpsampler(StageUpsampler):
    kind = UpsamplerKind.DECONV

    def param_specs(self) -> list[ParamSpec]:
        k = 2 * self.ratio
        return [
            ParamSpec.weight(f"{self.name}.weight", (self.channels, self.channels, k, k), fan_in=self.channels * k * k),
            ParamSpec.bias(f"{self.name}.bias", self.channels),
        ]

    def upsample(self, params, feature, guidance, training=False):
        out = deconv_upsample(feature, params[f"{self.name}.weight"], params[f"{self.name}.bias"], self.ratio)
        return out, None


class PixelShuffleUpsampler(StageUpsampler):
    kind = UpsamplerKind.PIXEL_SHUFFLE

    def param_specs(self) -> list[ParamSpec]:
        return conv_specs(self.name, pixelshuffle_spec(self.channels, self.ratio))

    def upsample(self, params, feature, guidance, training=False):
        out = pixelshuffle_upsample(feature, params[f"{self.name}.weight"], params[f"{self.name}.bias"], self.ratio)
        return out, None


class MaxUnpoolUpsampler(StageUpsampler):
    kind = UpsamplerKind.MAX_UNPOOL

    def __init__(self, name: str, channels: int, ratio: int = 2):
        if ratio != 2:
            raise ConfigValidationError(f"max-unpooling supports only ratio 2, got {ratio}")
        super().__init__(name, channels, ratio)

    def upsample(self, params, feature, guidance, training=False):
        if guidance.pool_indices is None:
            raise ConfigValidationError("max-unpooling requires max-pooling indices from the encoder")
        return max_unpool_2x2(feature, guidance.pool_indices), None


class CarafeUpsampler(StageUpsampler):
    kind = UpsamplerKind.CARAFE

    def __init__(
        self,
        name: str,
        channels: int,
        ratio: int = 2,
        k_up: int = 5,
        k_enc: int = 3,
        compress_channels: Optional[int] = None,
    ):
        super().__init__(name, channels, ratio)
        self.k_up = k_up
        self.k_enc = k_enc
        self.compress_channels = compress_channels

    def param_specs(self) -> list[ParamSpec]:
        specs: list[ParamSpec] = []
        enc_in = self.channels
        if self.compress_channels:
            specs += conv_specs(f"{self.name}.compress", ConvSpec.square(self.channels, self.compress_channels, 1))
            enc_in = self.compress_channels
        specs += conv_specs(f"{self.name}.encoder", carafe_encoder_spec(enc_in, self.k_up, self.k_enc, self.ratio))
        return specs

    def weights(self, params: ParamRegistry) -> CarafeWeights:
        compress = self.compress_channels is not None and self.compress_channels > 0
        return CarafeWeights(
            encoder_weight=params[f"{self.name}.encoder.weight"],
            encoder_bias=params[f"{self.name}.encoder.bias"],
            compress_weight=params[f"{self.name}.compress.weight"] if compress else None,
            compress_bias=params[f"{self.name}.compress.bias"] if compress else None,
        )

    def upsample(self, params, feature, guidance, training=False):
        kmap = carafe_generate(feature, self.weights(params), self.k_up, self.k_enc, self.ratio)
        return apply_kernel_map(feature, kmap), kmap


class IndexNetUpsampler(StageUpsampler):
    """Holistic index network; with `paired` it also drives the encoder downsampling."""

    kind = UpsamplerKind.INDEXNET

    def __init__(self, name: str, channels: int, ratio: int = 2, k_enc: int = 4, paired: bool = False):
        super().__init__(name, channels, ratio)
        self.k_enc = k_enc
        self.pairs_downsampling = paired

    def param_specs(self) -> list[ParamSpec]:
        spec = indexnet_encoder_spec(self.channels, self.k_enc, self.ratio)
        return [ParamSpec.conv_weight(f"{self.name}.encoder.weight", spec)]

    def index_maps(self, params: ParamRegistry, encoder_feat: Tensor) -> tuple[KernelMap, KernelMap]:
        weights = IndexNetWeights(encoder_weight=params[f"{self.name}.encoder.weight"])
        return indexnet_generate(encoder_feat, weights, self.k_enc, self.ratio)

    def upsample(self, params, feature, guidance, training=False):
        if guidance.feature is None:
            raise ConfigValidationError("IndexNet upsampling requires the pre-pooling encoder feature")
        _, _, h, w = feature.shape
        if guidance.feature.shape[2:] != (h * self.ratio, w * self.ratio):
            raise ShapeError(
                f"encoder feature {guidance.feature.shape[2:]} does not pair with decoder {h}x{w} at r={self.ratio}"
            )
        up, _ = self.index_maps(params, guidance.feature)
        return apply_kernel_map(feature, up), up

    def downsample(self, params, feature, training=False):
        if not self.pairs_downsampling:
            return super().downsample(params, feature, training)
        _, down = self.index_maps(params, feature)
        return apply_kernel_map(feature, down), down
