"""
Batch normalization over NCHW feature maps
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..errors import ShapeError
from ..tensor import Tensor, emit

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class NormMode(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass
class BatchNormState:
    """Running statistics (registry buffers) plus the update constants."""
    running_mean: Tensor
    running_var: Tensor
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS

    @classmethod
    def fresh(cls, channels: int, dtype=np.float32, **kwargs) -> "BatchNormState":
        return cls(
            running_mean=Tensor(np.zeros(channels), dtype=dtype),
            running_var=Tensor(np.ones(channels), dtype=dtype),
            **kwargs,
        )


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, mode: NormMode) -> Tensor:
    """
    Per-channel normalization.

    TRAIN normalizes by biased batch statistics and updates the running
    mean and unbiased running variance; EVAL is a pure affine map using the
    running statistics.
    """
    if x.ndim != 4:
        raise ShapeError(f"batchnorm2d expects NCHW input, got {x.shape}")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm2d: gamma/beta shapes {gamma.shape}/{beta.shape} do not match C={c}")
    count = n * h * w
    if count == 0:
        raise ShapeError("batchnorm2d: zero batch")

    xv = x.data
    g = gamma.data[None, :, None, None]
    b = beta.data[None, :, None, None]

    if NormMode(mode) == NormMode.EVAL:
        inv = 1.0 / np.sqrt(state.running_var.data + state.eps)[None, :, None, None]
        x_hat = (xv - state.running_mean.data[None, :, None, None]) * inv
        out = g * x_hat + b

        def _backward_eval(grad: np.ndarray):
            return (grad * g * inv, (grad * x_hat).sum(axis=(0, 2, 3)), grad.sum(axis=(0, 2, 3)))

        return emit("batchnorm2d", out, (x, gamma, beta), _backward_eval)

    mu = xv.mean(axis=(0, 2, 3))
    var = xv.var(axis=(0, 2, 3))
    inv = (1.0 / np.sqrt(var + state.eps))[None, :, None, None]
    x_hat = (xv - mu[None, :, None, None]) * inv
    out = g * x_hat + b

    unbiased = var * count / (count - 1) if count > 1 else var
    m = state.momentum
    state.running_mean.assign((1.0 - m) * state.running_mean.data + m * mu)
    state.running_var.assign((1.0 - m) * state.running_var.data + m * unbiased)

    def _backward_train(grad: np.ndarray):
        g_hat = grad * g
        g_x = inv / count * (
            count * g_hat
            - g_hat.sum(axis=(0, 2, 3), keepdims=True)
            - x_hat * (g_hat * x_hat).sum(axis=(0, 2, 3), keepdims=True)
        )
        return (g_x, (grad * x_hat).sum(axis=(0, 2, 3)), grad.sum(axis=(0, 2, 3)))

    return emit("batchnorm2d", out, (x, gamma, beta), _backward_train)
