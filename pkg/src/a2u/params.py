"""
A2U parameters - declarations, binding to a registry, closed-form counts
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ConfigValidationError
from ..nn import BatchNormState, ParamRegistry, ParamSpec, batchnorm_specs, init_params
from ..nn.layers import batchnorm_state
from ..tensor import DEFAULT_DTYPE, ConvSpec, Tensor
from .config import A2UConfig, A2UMode, ChannelSharing


def _encoder_channels(cfg: A2UConfig, channels: int) -> int:
    return channels if cfg.channel == ChannelSharing.WISE else 1


def generator_spec(channels: int, outputs: int) -> ConvSpec:
    """GAP vector → per-sample weights, as a bias-free 1×1 conv."""
    return ConvSpec.square(channels, outputs, 1, has_bias=False)


def projection_spec(in_maps: int, outputs: int) -> ConvSpec:
    return ConvSpec.square(in_maps, outputs, 1, has_bias=False)


def a2u_param_specs(cfg: A2UConfig, channels: int, prefix: str = "a2u") -> list[ParamSpec]:
    """Declaration-ordered parameter specs for one A2U stage."""
    if channels < 1:
        raise ConfigValidationError(f"channels must be positive, got {channels}")
    c_enc = _encoder_channels(cfg, channels)
    m, k = cfg.low_res_maps, cfg.k_en
    specs: list[ParamSpec] = []

    if cfg.mode != A2UMode.DYNAMIC:
        for branch in ("u", "v"):
            specs.append(ParamSpec.weight(f"{prefix}.{branch}", (c_enc, m, k, k), fan_in=k * k))
    else:
        kd = cfg.dynamic_kernel_side
        for branch in ("u", "v"):
            spec = generator_spec(channels, c_enc * m * kd * kd)
            specs.append(ParamSpec.conv_weight(f"{prefix}.{branch}_gen", spec))

    if cfg.encoder_norm_nonlin:
        for branch in ("u", "v"):
            specs += batchnorm_specs(f"{prefix}.bn_{branch}", channels * m)

    o = cfg.projection_channels
    if cfg.is_static:
        specs.append(ParamSpec.conv_weight(f"{prefix}.p", projection_spec(cfg.rank, o)))
    else:
        specs.append(ParamSpec.conv_weight(f"{prefix}.p_gen", generator_spec(channels, o * cfg.rank)))

    if cfg.paired_down:
        s_d2 = cfg.down_side ** 2
        if cfg.is_static:
            specs.append(ParamSpec.conv_weight(f"{prefix}.p_down", projection_spec(m, s_d2)))
        else:
            specs.append(ParamSpec.conv_weight(f"{prefix}.p_down_gen", generator_spec(channels, s_d2 * m)))
    return specs


def a2u_param_count(cfg: A2UConfig, channels: int) -> int:
    """
    Closed-form trainable parameter count.

    For d=1 without pairing or encoder norm this is the complexity table:
    static 4s² + 2k²(C|1), hybrid 4s²C + 2k²(C|1), dynamic 4s²C + 2(C²|C).
    """
    c = channels
    c_enc = _encoder_channels(cfg, c)
    m, k = cfg.low_res_maps, cfg.k_en
    if cfg.mode == A2UMode.DYNAMIC:
        kd = cfg.dynamic_kernel_side
        uv = 2 * c * c_enc * m * kd * kd
    else:
        uv = 2 * c_enc * m * k * k
    conditioned = 1 if cfg.is_static else c
    p = cfg.projection_channels * cfg.rank * conditioned
    p_down = cfg.down_side ** 2 * m * conditioned if cfg.paired_down else 0
    norm = 2 * 2 * c * m if cfg.encoder_norm_nonlin else 0
    return uv + p + p_down + norm


@dataclass
class BranchNorm:
    gamma: Tensor
    beta: Tensor
    state: BatchNormState


@dataclass
class A2UParams:
    """Bound weights of one A2U stage; which fields are set depends on the mode."""
    cfg: A2UConfig
    channels: int
    u: Optional[Tensor] = None
    v: Optional[Tensor] = None
    u_gen: Optional[Tensor] = None
    v_gen: Optional[Tensor] = None
    p: Optional[Tensor] = None
    p_gen: Optional[Tensor] = None
    p_down: Optional[Tensor] = None
    p_down_gen: Optional[Tensor] = None
    bn_u: Optional[BranchNorm] = None
    bn_v: Optional[BranchNorm] = None

    @classmethod
    def from_registry(cls, registry: ParamRegistry, cfg: A2UConfig, channels: int, prefix: str = "a2u") -> "A2UParams":
        def leaf(name: str) -> Optional[Tensor]:
            return registry.get(f"{prefix}.{name}")

        def norm(branch: str) -> Optional[BranchNorm]:
            if not cfg.encoder_norm_nonlin:
                return None
            p = f"{prefix}.bn_{branch}"
            return BranchNorm(registry[f"{p}.gamma"], registry[f"{p}.beta"], batchnorm_state(registry, p))

        params = cls(
            cfg=cfg,
            channels=channels,
            u=leaf("u"),
            v=leaf("v"),
            u_gen=leaf("u_gen"),
            v_gen=leaf("v_gen"),
            p=leaf("p"),
            p_gen=leaf("p_gen"),
            p_down=leaf("p_down"),
            p_down_gen=leaf("p_down_gen"),
            bn_u=norm("u"),
            bn_v=norm("v"),
        )
        params.validate()
        return params

    @classmethod
    def initialize(
        cls,
        cfg: A2UConfig,
        channels: int,
        seed: int = 0,
        dtype=DEFAULT_DTYPE,
        prefix: str = "a2u",
    ) -> tuple["A2UParams", ParamRegistry]:
        registry = init_params(a2u_param_specs(cfg, channels, prefix), seed=seed, dtype=dtype)
        return cls.from_registry(registry, cfg, channels, prefix), registry

    def validate(self) -> None:
        static_uv = self.cfg.mode != A2UMode.DYNAMIC
        required = {
            "u": static_uv,
            "v": static_uv,
            "u_gen": not static_uv,
            "v_gen": not static_uv,
            "p": self.cfg.is_static,
            "p_gen": not self.cfg.is_static,
            "p_down": self.cfg.paired_down and self.cfg.is_static,
            "p_down_gen": self.cfg.paired_down and not self.cfg.is_static,
        }
        for name, needed in required.items():
            present = getattr(self, name) is not None
            if needed and not present:
                raise ConfigValidationError(f"A2U params missing {name!r} for variant {self.cfg.variant}")
            if present and not needed:
                raise ConfigValidationError(f"A2U params carry unexpected {name!r} for variant {self.cfg.variant}")

    def leaves(self) -> list[Tensor]:
        out = [t for t in (self.u, self.v, self.u_gen, self.v_gen, self.p, self.p_gen, self.p_down, self.p_down_gen) if t is not None]
        for norm in (self.bn_u, self.bn_v):
            if norm is not None:
                out += [norm.gamma, norm.beta]
        return out

    def count(self) -> int:
        return int(np.sum([t.size for t in self.leaves()], dtype=np.int64))
