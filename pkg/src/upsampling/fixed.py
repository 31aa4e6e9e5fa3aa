"""
Distance-based upsampling - nearest neighbour and bilinear (align-corners=false)
"""
from enum import Enum

import numpy as np

from ..errors import ConfigValidationError, ShapeError
from ..tensor import Tensor, emit, nearest_upsample


class FixedKind(str, Enum):
    NEAREST = "nearest"
    BILINEAR = "bilinear"


def bilinear_kernel_weights(fx, fy) -> np.ndarray:
    """
    Corner weights for fractional offsets (fx, fy) in [0, 1].

    Returns [(1−fx)(1−fy), fx(1−fy), (1−fx)fy, fx·fy] stacked on a leading
    axis of length 4, for scalar or array offsets.
    """
    fx = np.asarray(fx, dtype=np.float64)
    fy = np.asarray(fy, dtype=np.float64)
    if np.any((fx < 0) | (fx > 1)) or np.any((fy < 0) | (fy > 1)):
        raise ConfigValidationError("bilinear fractions must lie in [0, 1]")
    fx, fy = np.broadcast_arrays(fx, fy)
    return np.stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy])


def _source_coords(in_size: int, out_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * (in_size / out_size) - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, in_size - 1)
    return i0, i1, src - i0


def _interp_matrix(i0: np.ndarray, i1: np.ndarray, frac: np.ndarray, in_size: int) -> np.ndarray:
    m = np.zeros((i0.size, in_size))
    rows = np.arange(i0.size)
    np.add.at(m, (rows, i0), 1.0 - frac)
    np.add.at(m, (rows, i1), frac)
    return m


def resample_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize of the last two axes, align-corners=false, edges clamped."""
    if x.ndim != 4:
        raise ShapeError(f"resample_bilinear expects NCHW input, got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"resample_bilinear: invalid output size {out_h}x{out_w}")
    _, _, h, w = x.shape
    y0, y1, fy = _source_coords(h, out_h)
    x0, x1, fx = _source_coords(w, out_w)
    weights = bilinear_kernel_weights(fx[None, :], fy[:, None]).astype(x.dtype)

    a = x.data
    corners = (
        a[:, :, y0][:, :, :, x0],
        a[:, :, y0][:, :, :, x1],
        a[:, :, y1][:, :, :, x0],
        a[:, :, y1][:, :, :, x1],
    )
    out = sum(wq * cq for wq, cq in zip(weights, corners))

    # separable adjoint of the corner gather
    mh = _interp_matrix(y0, y1, fy, h).astype(x.dtype)
    mw = _interp_matrix(x0, x1, fx, w).astype(x.dtype)

    def _backward(grad: np.ndarray):
        return (np.matmul(np.matmul(mh.T, grad), mw),)

    return emit("resample_bilinear", out, (x,), _backward)


def upsample_fixed(kind: FixedKind, x: Tensor, r: int) -> Tensor:
    if r < 1:
        raise ShapeError(f"upsampling ratio must be >= 1, got {r}")
    kind = FixedKind(kind)
    if kind == FixedKind.NEAREST:
        return nearest_upsample(x, r)
    return resample_bilinear(x, x.shape[2] * r, x.shape[3] * r)
