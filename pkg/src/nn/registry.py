"""
Parameter Registry
Named leaf tensors, declarative parameter specs and seeded initialization
"""
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np
import structlog

from ..errors import CheckpointError, ConfigValidationError, GradientError
from ..tensor import DEFAULT_DTYPE, ConvSpec, Tensor

logger = structlog.get_logger()


class InitKind(str, Enum):
    FAN_IN_UNIFORM = "fan_in_uniform"
    ZEROS = "zeros"
    ONES = "ones"


@dataclass(frozen=True)
class ParamSpec:
    """Declaration of one leaf: materialized by init_params in declaration order."""
    name: str
    shape: tuple[int, ...]
    init: InitKind = InitKind.FAN_IN_UNIFORM
    fan_in: int = 1
    trainable: bool = True

    @classmethod
    def conv_weight(cls, name: str, spec: ConvSpec) -> "ParamSpec":
        return cls(name=name, shape=spec.weight_shape, init=InitKind.FAN_IN_UNIFORM, fan_in=spec.fan_in)

    @classmethod
    def bias(cls, name: str, channels: int) -> "ParamSpec":
        return cls(name=name, shape=(channels,), init=InitKind.ZEROS)

    @classmethod
    def weight(cls, name: str, shape: Sequence[int], fan_in: int) -> "ParamSpec":
        return cls(name=name, shape=tuple(shape), init=InitKind.FAN_IN_UNIFORM, fan_in=fan_in)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))


def conv_specs(prefix: str, spec: ConvSpec) -> list[ParamSpec]:
    specs = [ParamSpec.conv_weight(f"{prefix}.weight", spec)]
    if spec.has_bias:
        specs.append(ParamSpec.bias(f"{prefix}.bias", spec.out_channels))
    return specs


def batchnorm_specs(prefix: str, channels: int) -> list[ParamSpec]:
    """gamma/beta are trainable; running statistics are buffers."""
    return [
        ParamSpec(f"{prefix}.gamma", (channels,), InitKind.ONES),
        ParamSpec(f"{prefix}.beta", (channels,), InitKind.ZEROS),
        ParamSpec(f"{prefix}.running_mean", (channels,), InitKind.ZEROS, trainable=False),
        ParamSpec(f"{prefix}.running_var", (channels,), InitKind.ONES, trainable=False),
    ]


class ParamRegistry:
    """Ordered name → leaf tensor map with a trainable flag per leaf."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._trainable: dict[str, bool] = {}

    def add(self, name: str, tensor: Tensor, trainable: bool = True) -> Tensor:
        if name in self._params:
            raise ConfigValidationError(f"duplicate parameter name {name!r}", name=name)
        tensor.name = name
        tensor.requires_grad = trainable
        self._params[name] = tensor
        self._trainable[name] = trainable
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise ConfigValidationError(f"unknown parameter {name!r}", name=name) from None

    def get(self, name: str) -> Optional[Tensor]:
        return self._params.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def items(self) -> Iterable[tuple[str, Tensor]]:
        return self._params.items()

    def trainable_items(self) -> Iterator[tuple[str, Tensor]]:
        return ((n, t) for n, t in self._params.items() if self._trainable[n])

    def gradients(self) -> dict[str, np.ndarray]:
        """Leaf gradients after backward; missing entries mean the leaf was never reached."""
        return {n: t.grad for n, t in self.trainable_items() if t.grad is not None}

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def load_state_dict(self, arrays: Mapping[str, np.ndarray]) -> None:
        missing = [n for n in self._params if n not in arrays]
        unexpected = [n for n in arrays if n not in self._params]
        if missing or unexpected:
            raise CheckpointError(
                "checkpoint does not match model parameters",
                missing=missing[:5],
                unexpected=unexpected[:5],
            )
        for name, arr in arrays.items():
            target = self._params[name]
            if tuple(arr.shape) != target.shape:
                raise CheckpointError(
                    f"shape mismatch for {name}: {tuple(arr.shape)} vs {target.shape}",
                    name=name,
                )
            target.assign(arr)


def init_params(specs: Sequence[ParamSpec], seed: int, dtype=DEFAULT_DTYPE) -> ParamRegistry:
    """
    Materialize parameter specs from one seeded generator.

    Conv weights draw U(−√(6/fan_in), +√(6/fan_in)); biases and betas are
    zero, gammas one. The result is a pure function of (specs, seed, dtype).
    """
    rng = np.random.default_rng(seed)
    registry = ParamRegistry()
    for spec in specs:
        if spec.init == InitKind.FAN_IN_UNIFORM:
            if spec.fan_in < 1:
                raise ConfigValidationError(f"fan_in must be positive for {spec.name}")
            bound = np.sqrt(6.0 / spec.fan_in)
            values = rng.uniform(-bound, bound, size=spec.shape)
        elif spec.init == InitKind.ZEROS:
            values = np.zeros(spec.shape)
        else:
            values = np.ones(spec.shape)
        registry.add(spec.name, Tensor(values, dtype=dtype), trainable=spec.trainable)

    logger.debug("params_initialized", seed=seed, leaves=len(registry), trainable=count_params(registry))
    return registry


def count_params(registry: ParamRegistry) -> int:
    """Exact number of trainable scalars."""
    return int(sum(t.size for _, t in registry.trainable_items()))


def require_gradients(registry: ParamRegistry, grads: Mapping[str, np.ndarray]) -> None:
    missing = [n for n, _ in registry.trainable_items() if grads.get(n) is None]
    if missing:
        raise GradientError(f"missing gradient for trainable leaf {missing[0]!r}", missing=missing[:5])
