"""
A2U configuration
The variant matrix: mode × channel sharing × pointwise, plus rank, kernel sizes and normalization
"""
from enum import Enum
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..errors import ConfigValidationError


class A2UMode(str, Enum):
    STATIC = "static"      # nothing input-dependent
    HYBRID = "hybrid"      # only P generated from the input
    DYNAMIC = "dynamic"    # P, U and V generated from the input


class ChannelSharing(str, Enum):
    SHARED = "cs"
    WISE = "cw"


class Normalization(str, Enum):
    SOFTMAX = "softmax"
    SIGMOID_SOFTMAX = "sigmoid_softmax"


class DynamicKernel(str, Enum):
    POINTWISE = "pointwise"    # 1×1 generated kernels
    FULL = "full"              # k_en×k_en generated kernels


VARIANT_MODES = [m.value for m in A2UMode]
VARIANT_CHANNELS = [c.value for c in ChannelSharing]


class A2UConfig(BaseModel):
    """
    One A2U variant.

    Serialized keys mirror the run-config JSON: mode, channel, pointwise,
    rank, k_en, s_u, ratio, normalization, encoder_norm_nonlin, paired_down,
    s_d (plus u_sigmoid, singleton_sigmoid and dynamic_kernel).
    """
    model_config = ConfigDict(extra="forbid", frozen=True, use_enum_values=False)

    mode: A2UMode = A2UMode.STATIC
    channel: ChannelSharing = ChannelSharing.WISE
    pointwise: bool = False
    rank: int = Field(default=1, ge=1)
    k_en: int = Field(default=5, ge=1)
    s_u: int = Field(default=3, ge=1)
    ratio: int = Field(default=2, ge=1)
    normalization: Normalization = Normalization.SIGMOID_SOFTMAX
    encoder_norm_nonlin: bool = False
    paired_down: bool = False
    s_d: Optional[int] = Field(default=None, ge=1)
    u_sigmoid: bool = False
    singleton_sigmoid: bool = True
    dynamic_kernel: DynamicKernel = DynamicKernel.POINTWISE

    @model_validator(mode="after")
    def _check_invariants(self) -> "A2UConfig":
        if self.rank > self.k_en * self.k_en:
            raise ValueError(f"rank d={self.rank} exceeds the bound k_en²={self.k_en * self.k_en}")
        if self.paired_down:
            s_d = self.down_side
            if s_d < self.ratio or (s_d - self.ratio) % 2:
                raise ValueError(
                    f"downsampling kernel side s_d={s_d} must be >= r={self.ratio} with s_d - r even"
                )
        return self

    # ── derived geometry ─────────────────────────────────────────────────────

    @property
    def down_side(self) -> int:
        """s_d; defaults to r²·s_u (kernel side)."""
        return self.s_d if self.s_d is not None else self.ratio * self.ratio * self.s_u

    @property
    def weight_sets(self) -> int:
        """Number of (U, V) sets: r² on the pointwise path, one otherwise."""
        return self.ratio * self.ratio if self.pointwise else 1

    @property
    def low_res_maps(self) -> int:
        return self.weight_sets * self.rank

    @property
    def projection_channels(self) -> int:
        """P output channels: r²·s_u² on the shuffle path, s_u² on the pointwise path."""
        s2 = self.s_u * self.s_u
        return s2 if self.pointwise else self.ratio * self.ratio * s2

    @property
    def dynamic_kernel_side(self) -> int:
        return self.k_en if self.dynamic_kernel == DynamicKernel.FULL else 1

    @property
    def is_static(self) -> bool:
        return self.mode == A2UMode.STATIC

    @property
    def variant(self) -> str:
        parts = [self.mode.value]
        if self.pointwise:
            parts.append("pw")
        parts.append(self.channel.value)
        if self.paired_down:
            parts.append("d")
        return "-".join(parts)

    # ── construction helpers ─────────────────────────────────────────────────

    @classmethod
    def from_variant(cls, variant: str, **overrides: Any) -> "A2UConfig":
        """Parse strings such as "static-pw-cw" or "hybrid-cs-d"."""
        tokens = [t for t in variant.strip().lower().split("-") if t]
        if not tokens or tokens[0] not in VARIANT_MODES:
            raise ConfigValidationError(f"variant {variant!r} must start with one of {VARIANT_MODES}")
        fields: dict[str, Any] = {"mode": tokens[0]}
        for token in tokens[1:]:
            if token in VARIANT_CHANNELS:
                fields["channel"] = token
            elif token == "pw":
                fields["pointwise"] = True
            elif token == "d":
                fields["paired_down"] = True
            else:
                raise ConfigValidationError(f"unknown variant token {token!r} in {variant!r}")
        fields.update(overrides)
        return cls.validated(**fields)

    @classmethod
    def toy(cls, **overrides: Any) -> "A2UConfig":
        """Reconstruction-experiment preset: static-pw-cw, s_u=1, k_en=4, sigmoid after U."""
        fields: dict[str, Any] = dict(
            mode=A2UMode.STATIC,
            channel=ChannelSharing.WISE,
            pointwise=True,
            s_u=1,
            k_en=4,
            u_sigmoid=True,
        )
        fields.update(overrides)
        return cls.validated(**fields)

    @classmethod
    def validated(cls, **fields: Any) -> "A2UConfig":
        """Construct, mapping pydantic errors onto the library's validation error."""
        try:
            return cls(**fields)
        except ValidationError as exc:
            raise ConfigValidationError(f"invalid A2U config: {exc.errors()[0]['msg']}", fields=fields) from exc

    def to_json_dict(self) -> dict[str, Any]:
        return self.model_dump(mode="json")
