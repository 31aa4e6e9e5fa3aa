"""
Toy encoder-decoder for the reconstruction experiment

The network is described by an architecture string such as
C(32)-D2-C(64)-D2-C(128)-D2-C(256)-C(128)-U2-C(64)-U2-C(32)-U2-C(1):
C(k) is a 3×3 conv + BatchNorm + ReLU (the last block is a plain conv),
Dr / Ur are the paired down/up-sampling stages.
"""
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
import structlog

from ..a2u import A2UConfig, A2UUpsampler
from ..errors import ConfigValidationError
from ..nn import Activation, LayerBlock, NormKind, ParamRegistry, ParamSpec, Trace, count_params, init_params
from ..tensor import DEFAULT_DTYPE, ConvSpec, Tensor, max_pool_2x2
from ..upsampling import (
    CarafeUpsampler,
    DeconvUpsampler,
    FixedKind,
    FixedUpsampler,
    Guidance,
    IndexNetUpsampler,
    KernelMap,
    MaxUnpoolUpsampler,
    PixelShuffleUpsampler,
    StageUpsampler,
    UpsamplerKind,
)

logger = structlog.get_logger()

DEFAULT_ARCHITECTURE = "C(32)-D2-C(64)-D2-C(128)-D2-C(256)-C(128)-U2-C(64)-U2-C(32)-U2-C(1)"
_TOKEN = re.compile(r"^(?:C\((\d+)\)|D(\d+)|U(\d+))$")


class DownsamplerKind(str, Enum):
    STRIDE2_CONV = "stride2_conv"
    MAXPOOL = "maxpool"
    PAIRED = "paired"


class BlockKind(str, Enum):
    CONV = "conv"
    DOWN = "down"
    UP = "up"


@dataclass(frozen=True)
class BlockToken:
    kind: BlockKind
    value: int


def parse_architecture(architecture: str) -> list[BlockToken]:
    """Tokenize and check D/U balance (every U closes the most recent open D with the same ratio)."""
    tokens: list[BlockToken] = []
    open_ratios: list[int] = []
    for raw in architecture.replace(" ", "").split("-"):
        match = _TOKEN.match(raw)
        if not match:
            raise ConfigValidationError(f"unknown architecture token {raw!r}")
        conv, down, up = match.groups()
        if conv is not None:
            token = BlockToken(BlockKind.CONV, int(conv))
        elif down is not None:
            token = BlockToken(BlockKind.DOWN, int(down))
            open_ratios.append(token.value)
        else:
            token = BlockToken(BlockKind.UP, int(up))
            if not open_ratios or open_ratios.pop() != token.value:
                raise ConfigValidationError(f"U{up} has no matching D{up} before it")
        if token.value < 1:
            raise ConfigValidationError(f"architecture token {raw!r} needs a positive value")
        tokens.append(token)
    if open_ratios:
        raise ConfigValidationError(f"{len(open_ratios)} downsampling stage(s) never upsampled")
    if not tokens or tokens[0].kind != BlockKind.CONV or tokens[-1].kind != BlockKind.CONV:
        raise ConfigValidationError("architecture must start and end with a C(k) block")
    return tokens


class UpsamplerSpec(BaseModel):
    """Which upsampler the decoder stages use, with its hyperparameters."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: UpsamplerKind = UpsamplerKind.A2U
    k_up: int = Field(default=1, ge=1)
    k_enc: Optional[int] = Field(default=None, ge=1)
    compress_channels: Optional[int] = Field(default=None, ge=1)
    paired: bool = False
    a2u: Optional[A2UConfig] = None

    @model_validator(mode="after")
    def _check_kind(self) -> "UpsamplerSpec":
        if self.a2u is not None and self.kind != UpsamplerKind.A2U:
            raise ValueError("a2u settings given for a non-A2U upsampler")
        if self.kind == UpsamplerKind.A2U and self.k_up != 1:
            raise ValueError("A2U kernel side is set by a2u.s_u, not k_up")
        if self.paired and self.kind not in (UpsamplerKind.INDEXNET, UpsamplerKind.A2U):
            raise ValueError(f"{self.kind.value} has no paired downsampler")
        return self

    @property
    def encoder_kernel(self) -> int:
        if self.k_enc is not None:
            return self.k_enc
        return 3 if self.kind == UpsamplerKind.CARAFE else 4

    @property
    def a2u_config(self) -> A2UConfig:
        cfg = self.a2u or A2UConfig.toy()
        if self.paired and not cfg.paired_down:
            cfg = A2UConfig.validated(**{**cfg.model_dump(), "paired_down": True})
        return cfg

    @property
    def pairs_downsampling(self) -> bool:
        if self.kind == UpsamplerKind.A2U:
            return self.a2u_config.paired_down
        return self.paired

    @property
    def label(self) -> str:
        if self.kind == UpsamplerKind.A2U:
            return f"a2u[{self.a2u_config.variant}]"
        return self.kind.value


def default_downsampler(spec: UpsamplerSpec) -> DownsamplerKind:
    if spec.pairs_downsampling:
        return DownsamplerKind.PAIRED
    if spec.kind in (UpsamplerKind.INDEXNET, UpsamplerKind.A2U, UpsamplerKind.MAX_UNPOOL, UpsamplerKind.CARAFE):
        return DownsamplerKind.MAXPOOL
    return DownsamplerKind.STRIDE2_CONV


class ToyNetSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    architecture: str = DEFAULT_ARCHITECTURE
    in_channels: int = Field(default=1, ge=1)
    input_size: int = Field(default=32, ge=1)
    upsampler: UpsamplerSpec = Field(default_factory=UpsamplerSpec)
    downsampler: Optional[DownsamplerKind] = None

    @field_validator("architecture")
    @classmethod
    def _parseable(cls, value: str) -> str:
        try:
            parse_architecture(value)
        except ConfigValidationError as exc:
            raise ValueError(exc.message) from exc
        return value

    @model_validator(mode="after")
    def _check_pairing(self) -> "ToyNetSpec":
        down = self.resolved_downsampler
        if self.upsampler.kind == UpsamplerKind.MAX_UNPOOL and down != DownsamplerKind.MAXPOOL:
            raise ValueError("max-unpooling needs max-pooling downsamplers")
        if (down == DownsamplerKind.PAIRED) != self.upsampler.pairs_downsampling:
            raise ValueError("paired downsampling needs an upsampler configured for pairing, and vice versa")
        size = self.input_size
        for token in self.blocks:
            if token.kind == BlockKind.DOWN:
                if size % token.value:
                    raise ValueError(f"spatial size {size} not divisible by D{token.value}")
                if down == DownsamplerKind.MAXPOOL and token.value != 2:
                    raise ValueError("max-pooling downsamplers support only D2")
                size //= token.value
            elif token.kind == BlockKind.UP:
                size *= token.value
        return self

    @property
    def blocks(self) -> list[BlockToken]:
        return parse_architecture(self.architecture)

    @property
    def resolved_downsampler(self) -> DownsamplerKind:
        return self.downsampler or default_downsampler(self.upsampler)

    @classmethod
    def validated(cls, **fields) -> "ToyNetSpec":
        try:
            return cls(**fields)
        except ValidationError as exc:
            raise ConfigValidationError(f"invalid network spec: {exc.errors()[0]['msg']}", fields=str(fields)) from exc


# ═══════════════════════════════════════════════════════════════════════════════
# NETWORK
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass
class _Stage:
    kind: BlockKind
    block: Optional[LayerBlock] = None
    pair: int = -1


def make_upsampler(spec: UpsamplerSpec, name: str, enc_channels: int, dec_channels: int, ratio: int) -> StageUpsampler:
    kind = spec.kind
    if kind in (UpsamplerKind.NEAREST, UpsamplerKind.BILINEAR):
        return FixedUpsampler(name, dec_channels, ratio, kind=FixedKind(kind.value))
    if kind == UpsamplerKind.DECONV:
        return DeconvUpsampler(name, dec_channels, ratio)
    if kind == UpsamplerKind.PIXEL_SHUFFLE:
        return PixelShuffleUpsampler(name, dec_channels, ratio)
    if kind == UpsamplerKind.MAX_UNPOOL:
        return MaxUnpoolUpsampler(name, dec_channels, ratio)
    if kind == UpsamplerKind.CARAFE:
        return CarafeUpsampler(name, dec_channels, ratio, spec.k_up, spec.encoder_kernel, spec.compress_channels)
    if kind == UpsamplerKind.INDEXNET:
        return IndexNetUpsampler(name, enc_channels, ratio, spec.encoder_kernel, paired=spec.paired)
    cfg = spec.a2u_config
    if cfg.ratio != ratio:
        raise ConfigValidationError(f"A2U ratio {cfg.ratio} does not match architecture ratio {ratio}")
    return A2UUpsampler(name, enc_channels, cfg)


class ToyNet:
    """Stage list built from a ToyNetSpec; parameters live in a separate registry."""

    def __init__(self, spec: ToyNetSpec):
        self.spec = spec
        self.downsampler = spec.resolved_downsampler
        self.stages: list[_Stage] = []
        self.down_blocks: dict[int, LayerBlock] = {}
        self.upsamplers: dict[int, StageUpsampler] = {}
        self._build()

    def _build(self) -> None:
        tokens = self.spec.blocks
        last_conv = max(i for i, t in enumerate(tokens) if t.kind == BlockKind.CONV)
        channels = self.spec.in_channels
        open_pairs: list[tuple[int, int, int]] = []  # (pair id, encoder channels, ratio)
        n_pairs = 0

        for i, token in enumerate(tokens):
            if token.kind == BlockKind.CONV:
                final = i == last_conv
                block = LayerBlock(
                    name=f"block{i}",
                    conv=ConvSpec.square(channels, token.value, 3, padding=1),
                    norm=NormKind.NONE if final else NormKind.BATCHNORM,
                    activation=Activation.NONE if final else Activation.RELU,
                )
                self.stages.append(_Stage(BlockKind.CONV, block=block))
                channels = token.value
            elif token.kind == BlockKind.DOWN:
                pair = n_pairs
                n_pairs += 1
                open_pairs.append((pair, channels, token.value))
                if self.downsampler == DownsamplerKind.STRIDE2_CONV:
                    r = token.value
                    self.down_blocks[pair] = LayerBlock(
                        name=f"down{pair}",
                        conv=ConvSpec.square(channels, channels, 2 * r, stride=r, padding=r // 2),
                        norm=NormKind.NONE,
                        activation=Activation.NONE,
                    )
                self.stages.append(_Stage(BlockKind.DOWN, pair=pair))
            else:
                pair, enc_channels, ratio = open_pairs.pop()
                self.upsamplers[pair] = make_upsampler(self.spec.upsampler, f"up{pair}", enc_channels, channels, ratio)
                self.stages.append(_Stage(BlockKind.UP, pair=pair))

    def param_specs(self) -> list[ParamSpec]:
        specs: list[ParamSpec] = []
        for stage in self.stages:
            if stage.kind == BlockKind.CONV:
                specs += stage.block.param_specs()
            elif stage.kind == BlockKind.DOWN and stage.pair in self.down_blocks:
                specs += self.down_blocks[stage.pair].param_specs()
            elif stage.kind == BlockKind.UP:
                specs += self.upsamplers[stage.pair].param_specs()
        return specs

    def forward(
        self,
        params: ParamRegistry,
        x: Tensor,
        training: bool = False,
        kernel_maps: Optional[list[tuple[str, KernelMap]]] = None,
        trace: Optional[Trace] = None,
    ) -> Tensor:
        """
        Run the network.

        Args:
            params: Registry built from param_specs()
            x: Input batch [N, C_in, S, S]
            training: Batch statistics for BatchNorm (and running-stat updates)
            kernel_maps: When given, every generated KernelMap is appended as (stage name, map)
            trace: When given, relu pre-activations and max-pool inputs are appended
        """
        guidance: dict[int, Guidance] = {}
        h = x
        for stage in self.stages:
            if stage.kind == BlockKind.CONV:
                h = stage.block.forward(params, h, training, trace)
            elif stage.kind == BlockKind.DOWN:
                g = Guidance(feature=h)
                if self.downsampler == DownsamplerKind.STRIDE2_CONV:
                    h = self.down_blocks[stage.pair].forward(params, h, training)
                elif self.downsampler == DownsamplerKind.MAXPOOL:
                    if trace is not None:
                        trace.append(("max_pool", np.array(h.data)))
                    h, g.pool_indices = max_pool_2x2(h)
                else:
                    h, kmap = self.upsamplers[stage.pair].downsample(params, h, training)
                    if kernel_maps is not None and kmap is not None:
                        kernel_maps.append((f"down{stage.pair}", kmap))
                guidance[stage.pair] = g
            else:
                h, kmap = self.upsamplers[stage.pair].upsample(params, h, guidance.pop(stage.pair), training)
                if kernel_maps is not None and kmap is not None:
                    kernel_maps.append((f"up{stage.pair}", kmap))
        return h


@dataclass
class ToyModel:
    net: ToyNet
    params: ParamRegistry

    @property
    def spec(self) -> ToyNetSpec:
        return self.net.spec

    def __call__(
        self,
        x: Union[Tensor, np.ndarray],
        training: bool = False,
        kernel_maps: Optional[list[tuple[str, KernelMap]]] = None,
    ) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(x, dtype=self.dtype)
        return self.net.forward(self.params, x, training, kernel_maps)

    @property
    def dtype(self):
        first = next(iter(self.params.items()), None)
        return first[1].dtype if first else DEFAULT_DTYPE

    def count_params(self) -> int:
        return count_params(self.params)


def build_toy_net(spec: ToyNetSpec, seed: int = 0, dtype=DEFAULT_DTYPE) -> ToyModel:
    net = ToyNet(spec)
    params = init_params(net.param_specs(), seed=seed, dtype=dtype)
    logger.info(
        "toy_net_built",
        upsampler=spec.upsampler.label,
        downsampler=net.downsampler.value,
        params=count_params(params),
        seed=seed,
    )
    return ToyModel(net=net, params=params)
