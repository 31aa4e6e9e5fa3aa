"""
A2U decoder-stage module
Kernels come from the pre-pooling encoder feature; paired variants also drive the encoder downsampling.
"""
from ..errors import ConfigValidationError, ShapeError
from ..nn import ParamRegistry, ParamSpec
from ..tensor import Tensor
from ..upsampling import Guidance, StageUpsampler, UpsamplerKind, apply_kernel_map
from .config import A2UConfig
from .generate import a2u_downsample_generate, a2u_generate
from .params import A2UParams, a2u_param_specs


class A2UUpsampler(StageUpsampler):
    kind = UpsamplerKind.A2U

    def __init__(self, name: str, channels: int, cfg: A2UConfig):
        super().__init__(name, channels, cfg.ratio)
        self.cfg = cfg
        self.pairs_downsampling = cfg.paired_down

    def param_specs(self) -> list[ParamSpec]:
        return a2u_param_specs(self.cfg, self.channels, prefix=self.name)

    def bind(self, params: ParamRegistry) -> A2UParams:
        return A2UParams.from_registry(params, self.cfg, self.channels, prefix=self.name)

    def upsample(self, params: ParamRegistry, feature: Tensor, guidance: Guidance, training: bool = False):
        x = guidance.feature
        if x is None:
            raise ConfigValidationError("A2U upsampling requires the pre-pooling encoder feature")
        _, _, h, w = feature.shape
        if x.shape[2:] != (h * self.ratio, w * self.ratio):
            raise ShapeError(f"encoder feature {x.shape[2:]} does not pair with decoder {h}x{w} at r={self.ratio}")
        kmap = a2u_generate(x, x, self.bind(params), self.cfg, training=training)
        return apply_kernel_map(feature, kmap), kmap

    def downsample(self, params: ParamRegistry, feature: Tensor, training: bool = False):
        if not self.pairs_downsampling:
            return super().downsample(params, feature, training)
        kmap = a2u_downsample_generate(feature, self.bind(params), self.cfg, training=training)
        return apply_kernel_map(feature, kmap), kmap
