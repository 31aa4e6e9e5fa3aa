"""
Layer compositions - convolution, optional batchnorm, optional activation
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from ..tensor import ConvSpec, Tensor, conv2d, relu
from .batchnorm import BN_EPS, BN_MOMENTUM, BatchNormState, NormMode, batchnorm2d
from .registry import ParamRegistry, ParamSpec, batchnorm_specs, conv_specs

# (kind, array) pairs recorded at the non-smooth points of a forward pass
Trace = list[tuple[str, np.ndarray]]


class NormKind(str, Enum):
    BATCHNORM = "batchnorm"
    NONE = "none"


class Activation(str, Enum):
    RELU = "relu"
    NONE = "none"


def batchnorm_state(params: ParamRegistry, prefix: str, momentum: float = BN_MOMENTUM, eps: float = BN_EPS) -> BatchNormState:
    return BatchNormState(
        running_mean=params[f"{prefix}.running_mean"],
        running_var=params[f"{prefix}.running_var"],
        momentum=momentum,
        eps=eps,
    )


def apply_batchnorm(params: ParamRegistry, prefix: str, x: Tensor, training: bool) -> Tensor:
    return batchnorm2d(
        x,
        params[f"{prefix}.gamma"],
        params[f"{prefix}.beta"],
        batchnorm_state(params, prefix),
        NormMode.TRAIN if training else NormMode.EVAL,
    )


@dataclass(frozen=True)
class LayerBlock:
    """conv → [batchnorm] → [relu]; weights and running stats live in the registry under `name`."""
    name: str
    conv: ConvSpec
    norm: NormKind = NormKind.BATCHNORM
    activation: Activation = Activation.RELU

    def param_specs(self) -> list[ParamSpec]:
        specs = conv_specs(f"{self.name}.conv", self.conv)
        if self.norm == NormKind.BATCHNORM:
            specs += batchnorm_specs(f"{self.name}.bn", self.conv.out_channels)
        return specs

    def forward(self, params: ParamRegistry, x: Tensor, training: bool = False, trace: Optional[Trace] = None) -> Tensor:
        bias = params[f"{self.name}.conv.bias"] if self.conv.has_bias else None
        out = conv2d(x, self.conv, params[f"{self.name}.conv.weight"], bias)
        if self.norm == NormKind.BATCHNORM:
            out = apply_batchnorm(params, f"{self.name}.bn", out, training)
        if self.activation == Activation.RELU:
            if trace is not None:
                trace.append(("relu", np.array(out.data)))
            out = relu(out)
        return out
