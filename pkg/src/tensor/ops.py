"""
Differentiable ops over NCHW tensors

Every op validates shapes, computes its forward with vectorized numpy and
records a closure for the backward pass on the active tape.

Op families:
    - Convolution: conv2d, conv_transpose2d, unfold, fold, pad2d
    - Activation: softmax, elementwise (sigmoid/relu/tanh)
    - Arithmetic: hadamard, sum, l1_loss
    - Layout: reshape, permute, repeat, pixel_shuffle, pixel_unshuffle
    - Pooling: global_avg_pool, max_pool_2x2, max_unpool_2x2, nearest_upsample
    - Per-sample: per_sample_pointwise, per_sample_depthwise, weighted_window_sum
"""
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, emit

ElementwiseKind = Literal["sigmoid", "relu", "tanh"]


# ═══════════════════════════════════════════════════════════════════════════════
# ARRAY HELPERS
# ═══════════════════════════════════════════════════════════════════════════════

def _require_4d(x: Tensor, op: str) -> tuple[int, int, int, int]:
    if x.ndim != 4:
        raise ShapeError(f"{op} expects a 4-D NCHW tensor, got shape {x.shape}", op=op)
    return x.shape  # type: ignore[return-value]


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}", op=op)


def _pad_array(x: np.ndarray, top: int, bottom: int, left: int, right: int) -> np.ndarray:
    """Zero-pad the last two axes; negative amounts crop."""
    x = np.pad(x, ((0, 0), (0, 0), (max(top, 0), max(bottom, 0)), (max(left, 0), max(right, 0))))
    h, w = x.shape[-2:]
    return x[..., max(-top, 0):h - max(-bottom, 0), max(-left, 0):w - max(-right, 0)]


def _output_size(size: int, k: int, stride: int, op: str) -> int:
    if size < k or (size - k) % stride:
        raise ShapeError(
            f"{op}: window {k} with stride {stride} does not tile a padded extent of {size}",
            op=op,
        )
    return (size - k) // stride + 1


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, op: str) -> np.ndarray:
    """Padded [N,C,H,W] -> windows [N,C,kh,kw,OH,OW]."""
    n, c, h, w = xp.shape
    oh = _output_size(h, kh, stride, op)
    ow = _output_size(w, kw, stride, op)
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + stride * (oh - 1) + 1:stride, j:j + stride * (ow - 1) + 1:stride]
    return cols


def _col2im(cols: np.ndarray, h: int, w: int, stride: int) -> np.ndarray:
    """Adjoint of _im2col: windows [N,C,kh,kw,OH,OW] -> [N,C,h,w] with overlaps summed."""
    n, c, kh, kw, oh, ow = cols.shape
    out = np.zeros((n, c, h, w), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * (oh - 1) + 1:stride, j:j + stride * (ow - 1) + 1:stride] += cols[:, :, i, j]
    return out


def _unbroadcast_sum(grad: np.ndarray, shape: tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(grad, shape).copy()
    if not keepdims:
        grad = np.expand_dims(grad, axis)
    return np.broadcast_to(grad, shape).copy()


# ═══════════════════════════════════════════════════════════════════════════════
# CONVOLUTION
# ═══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class ConvSpec:
    """Shape contract of a (grouped) 2-D convolution."""
    out_channels: int
    in_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: int = 0
    groups: int = 1
    has_bias: bool = True

    def __post_init__(self):
        if min(self.out_channels, self.in_channels, self.kernel_h, self.kernel_w, self.groups) < 1:
            raise ShapeError(f"conv spec dimensions must be positive: {self}")
        if self.stride < 1 or self.padding < 0:
            raise ShapeError(f"conv spec needs stride >= 1 and padding >= 0: {self}")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ShapeError(
                f"channels ({self.in_channels} -> {self.out_channels}) not divisible by groups={self.groups}"
            )

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels // self.groups, self.kernel_h, self.kernel_w)

    @property
    def fan_in(self) -> int:
        return (self.in_channels // self.groups) * self.kernel_h * self.kernel_w

    @classmethod
    def square(cls, in_channels: int, out_channels: int, k: int, **kwargs) -> "ConvSpec":
        return cls(out_channels=out_channels, in_channels=in_channels, kernel_h=k, kernel_w=k, **kwargs)


def conv2d(x: Tensor, spec: ConvSpec, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Grouped 2-D cross-correlation with symmetric zero padding."""
    n, c, h, w = _require_4d(x, "conv2d")
    if c != spec.in_channels:
        raise ShapeError(f"conv2d: input has {c} channels, spec expects {spec.in_channels}")
    if weight.shape != spec.weight_shape:
        raise ShapeError(f"conv2d: weight shape {weight.shape} != {spec.weight_shape}")
    if spec.has_bias != (bias is not None):
        raise ShapeError(f"conv2d: has_bias={spec.has_bias} but bias {'missing' if bias is None else 'given'}")
    if bias is not None and bias.shape != (spec.out_channels,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({spec.out_channels},)")

    p, s, g = spec.padding, spec.stride, spec.groups
    kh, kw = spec.kernel_h, spec.kernel_w
    o = spec.out_channels
    xp = _pad_array(x.data, p, p, p, p)
    hp, wp = xp.shape[-2:]
    cols = _im2col(xp, kh, kw, s, "conv2d")
    oh, ow = cols.shape[-2:]
    k_len = (c // g) * kh * kw
    cols_g = cols.reshape(n, g, k_len, oh * ow)
    w_g = weight.data.reshape(g, o // g, k_len)

    out = np.matmul(w_g, cols_g).reshape(n, o, oh, ow)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def _backward(grad: np.ndarray):
        go = grad.reshape(n, g, o // g, oh * ow)
        g_w = np.matmul(go, cols_g.transpose(0, 1, 3, 2)).sum(axis=0).reshape(weight.shape)
        g_cols = np.matmul(w_g.transpose(0, 2, 1), go).reshape(n, c, kh, kw, oh, ow)
        g_x = _pad_array(_col2im(g_cols, hp, wp, s), -p, -p, -p, -p)
        g_b = grad.sum(axis=(0, 2, 3)) if bias is not None else None
        return (g_x, g_w, g_b) if bias is not None else (g_x, g_w)

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return emit("conv2d", out, inputs, _backward)


def conv_transpose2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Adjoint of conv2d; weight is [C_in, C_out, k, k], output side (H-1)*stride - 2p + k."""
    n, c_in, h, w = _require_4d(x, "conv_transpose2d")
    if weight.ndim != 4 or weight.shape[0] != c_in or weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"conv_transpose2d: weight shape {weight.shape} incompatible with {c_in} input channels")
    c_out, k = weight.shape[1], weight.shape[2]
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"conv_transpose2d: bias shape {bias.shape} != ({c_out},)")
    hp, wp = (h - 1) * stride + k, (w - 1) * stride + k
    if hp - 2 * padding < 1 or wp - 2 * padding < 1:
        raise ShapeError("conv_transpose2d: padding larger than output")

    w2 = weight.data.reshape(c_in, c_out * k * k)
    x2 = x.data.reshape(n, c_in, h * w)
    cols = np.matmul(w2.T, x2).reshape(n, c_out, k, k, h, w)
    out = _pad_array(_col2im(cols, hp, wp, stride), -padding, -padding, -padding, -padding)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def _backward(grad: np.ndarray):
        gp = _pad_array(grad, padding, padding, padding, padding)
        g_cols = _im2col(gp, k, k, stride, "conv_transpose2d").reshape(n, c_out * k * k, h * w)
        g_x = np.matmul(w2, g_cols).reshape(x.shape)
        g_w = np.matmul(x2, g_cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        if bias is None:
            return (g_x, g_w)
        return (g_x, g_w, grad.sum(axis=(0, 2, 3)))

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return emit("conv_transpose2d", out, inputs, _backward)


def pad2d(x: Tensor, top: int, bottom: int, left: int, right: int) -> Tensor:
    """Zero padding on H and W; negative amounts crop."""
    _, _, h, w = _require_4d(x, "pad2d")
    if h + top + bottom < 1 or w + left + right < 1:
        raise ShapeError(f"pad2d: cropping removes the whole map ({x.shape})")
    out = _pad_array(x.data, top, bottom, left, right)

    def _backward(grad: np.ndarray):
        return (_pad_array(grad, -top, -bottom, -left, -right),)

    return emit("pad2d", out, (x,), _backward)


def encoder_padding(k: int, stride: int) -> tuple[int, int]:
    """(before, after) padding that maps H to exactly H/stride with a k-wide window."""
    total = k - stride
    before = -((-total) // 2)
    return before, total - before


def unfold(x: Tensor, k: int, stride: int = 1, pad: int = 0) -> Tensor:
    """Sliding k×k windows -> [N, C·k², L], row-major within each window."""
    n, c, h, w = _require_4d(x, "unfold")
    if k < 1 or stride < 1 or pad < 0:
        raise ShapeError(f"unfold: invalid k={k}, stride={stride}, pad={pad}")
    xp = _pad_array(x.data, pad, pad, pad, pad)
    hp, wp = xp.shape[-2:]
    cols = _im2col(xp, k, k, stride, "unfold")
    oh, ow = cols.shape[-2:]
    out = cols.reshape(n, c * k * k, oh * ow)

    def _backward(grad: np.ndarray):
        g_cols = grad.reshape(n, c, k, k, oh, ow)
        return (_pad_array(_col2im(g_cols, hp, wp, stride), -pad, -pad, -pad, -pad),)

    return emit("unfold", out, (x,), _backward)


def fold(cols: Tensor, out_hw: tuple[int, int], k: int, stride: int = 1, pad: int = 0) -> Tensor:
    """Adjoint of unfold: overlapping window contributions are summed."""
    if cols.ndim != 3 or cols.shape[1] % (k * k):
        raise ShapeError(f"fold: columns shape {cols.shape} incompatible with k={k}")
    n, ckk, length = cols.shape
    c = ckk // (k * k)
    h, w = out_hw
    hp, wp = h + 2 * pad, w + 2 * pad
    oh = _output_size(hp, k, stride, "fold")
    ow = _output_size(wp, k, stride, "fold")
    if oh * ow != length:
        raise ShapeError(f"fold: {length} columns do not match output grid {oh}x{ow}")
    out = _pad_array(_col2im(cols.data.reshape(n, c, k, k, oh, ow), hp, wp, stride), -pad, -pad, -pad, -pad)

    def _backward(grad: np.ndarray):
        gp = _pad_array(grad, pad, pad, pad, pad)
        return (_im2col(gp, k, k, stride, "fold").reshape(n, ckk, length),)

    return emit("fold", out, (cols,), _backward)


# ═══════════════════════════════════════════════════════════════════════════════
# ACTIVATIONS
# ═══════════════════════════════════════════════════════════════════════════════

def _softmax_backward(s: np.ndarray, grad: np.ndarray, axis: int) -> np.ndarray:
    return s * (grad - (grad * s).sum(axis=axis, keepdims=True))


def softmax(x: Tensor, axis: int) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax: axis {axis} out of range for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def _backward(grad: np.ndarray):
        return (_softmax_backward(s, grad, axis),)

    return emit("softmax", s, (x,), _backward)


def _sigmoid(a: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def elementwise(kind: ElementwiseKind, x: Tensor) -> Tensor:
    """Shape-preserving nonlinearity."""
    a = x.data
    if kind == "sigmoid":
        out = _sigmoid(a)
        derivative = out * (1.0 - out)
    elif kind == "relu":
        out = np.maximum(a, 0)
        derivative = (a > 0).astype(a.dtype)
    elif kind == "tanh":
        out = np.tanh(a)
        derivative = 1.0 - out * out
    else:
        raise ShapeError(f"unknown elementwise kind {kind!r}")

    def _backward(grad: np.ndarray):
        return (grad * derivative,)

    return emit(kind, out, (x,), _backward)


def sigmoid(x: Tensor) -> Tensor:
    return elementwise("sigmoid", x)


def relu(x: Tensor) -> Tensor:
    return elementwise("relu", x)


def tanh(x: Tensor) -> Tensor:
    return elementwise("tanh", x)


# ═══════════════════════════════════════════════════════════════════════════════
# ARITHMETIC
# ═══════════════════════════════════════════════════════════════════════════════

def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "hadamard")
    av, bv = a.data, b.data

    def _backward(grad: np.ndarray):
        return (grad * bv, grad * av)

    return emit("hadamard", av * bv, (a, b), _backward)


def sum(x: Tensor, axis: Optional[int | tuple[int, ...]] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def _backward(grad: np.ndarray):
        return (_unbroadcast_sum(grad, x.shape, axis, keepdims),)

    return emit("sum", np.asarray(out), (x,), _backward)


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error as a scalar."""
    _require_same_shape(pred, target, "l1_loss")
    diff = pred.data - target.data
    count = diff.size

    def _backward(grad: np.ndarray):
        g = np.sign(diff) * (grad / count)
        return (g, -g)

    return emit("l1_loss", np.asarray(np.abs(diff).mean()), (pred, target), _backward)


# ═══════════════════════════════════════════════════════════════════════════════
# LAYOUT
# ═══════════════════════════════════════════════════════════════════════════════

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from exc

    def _backward(grad: np.ndarray):
        return (grad.reshape(x.shape),)

    return emit("reshape", out, (x,), _backward)


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"permute: {axes} is not a permutation of {x.ndim} axes")
    inverse = tuple(np.argsort(axes))

    def _backward(grad: np.ndarray):
        return (grad.transpose(inverse),)

    return emit("permute", x.data.transpose(axes), (x,), _backward)


def repeat(x: Tensor, axis: int, times: int) -> Tensor:
    """Explicit expansion along one axis (each entry repeated `times` times in place)."""
    if times < 1:
        raise ShapeError(f"repeat: times must be >= 1, got {times}")
    axis = axis % x.ndim
    out = np.repeat(x.data, times, axis=axis)

    def _backward(grad: np.ndarray):
        split = grad.shape[:axis] + (x.shape[axis], times) + grad.shape[axis + 1:]
        return (grad.reshape(split).sum(axis=axis + 1),)

    return emit("repeat", out, (x,), _backward)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """[N, C·r², H, W] -> [N, C, rH, rW]; out(c, r·i+di, r·j+dj) = in(c·r²+di·r+dj, i, j)."""
    n, c_in, h, w = _require_4d(x, "pixel_shuffle")
    if r < 1 or c_in % (r * r):
        raise ShapeError(f"pixel_shuffle: {c_in} channels not divisible by r²={r * r}")
    c = c_in // (r * r)
    out = x.data.reshape(n, c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, h * r, w * r)

    def _backward(grad: np.ndarray):
        return (grad.reshape(n, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(x.shape),)

    return emit("pixel_shuffle", out, (x,), _backward)


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Exact inverse of pixel_shuffle."""
    n, c, hr, wr = _require_4d(x, "pixel_unshuffle")
    if r < 1 or hr % r or wr % r:
        raise ShapeError(f"pixel_unshuffle: spatial size {hr}x{wr} not divisible by {r}")
    h, w = hr // r, wr // r
    out = x.data.reshape(n, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, h, w)

    def _backward(grad: np.ndarray):
        return (grad.reshape(n, c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(x.shape),)

    return emit("pixel_unshuffle", out, (x,), _backward)


# ═══════════════════════════════════════════════════════════════════════════════
# POOLING / RESAMPLING
# ═══════════════════════════════════════════════════════════════════════════════

def global_avg_pool(x: Tensor) -> Tensor:
    n, c, h, w = _require_4d(x, "global_avg_pool")
    out = x.data.mean(axis=(2, 3), keepdims=True)

    def _backward(grad: np.ndarray):
        return (np.broadcast_to(grad / (h * w), x.shape).copy(),)

    return emit("global_avg_pool", out, (x,), _backward)


def _windows_2x2(a: np.ndarray) -> np.ndarray:
    n, c, h, w = a.shape
    return a.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)


def _unwindow_2x2(a: np.ndarray) -> np.ndarray:
    n, c, h2, w2, _ = a.shape
    return a.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2 * 2, w2 * 2)


def max_pool_2x2(x: Tensor) -> tuple[Tensor, np.ndarray]:
    """
    2×2 stride-2 max pooling.

    Returns the pooled tensor and per-channel window indices in 0..3
    (row-major inside the window). Ties go to the smallest index.
    """
    n, c, h, w = _require_4d(x, "max_pool_2x2")
    if h % 2 or w % 2:
        raise ShapeError(f"max_pool_2x2: spatial size {h}x{w} must be even")
    windows = _windows_2x2(x.data)
    indices = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, indices[..., None], axis=-1)[..., 0]

    def _backward(grad: np.ndarray):
        g_win = np.zeros(windows.shape, dtype=grad.dtype)
        np.put_along_axis(g_win, indices[..., None], grad[..., None], axis=-1)
        return (_unwindow_2x2(g_win),)

    return emit("max_pool_2x2", out, (x,), _backward), indices


def max_unpool_2x2(pooled: Tensor, indices: np.ndarray) -> Tensor:
    """Place each value at its recorded window position; zeros elsewhere."""
    n, c, h2, w2 = _require_4d(pooled, "max_unpool_2x2")
    if indices.shape != pooled.shape:
        raise ShapeError(f"max_unpool_2x2: indices shape {indices.shape} != {pooled.shape}")
    if indices.size and (indices.min() < 0 or indices.max() > 3):
        raise ShapeError("max_unpool_2x2: index out of 2x2 window")
    idx = indices[..., None].astype(np.int64)
    windows = np.zeros((n, c, h2, w2, 4), dtype=pooled.dtype)
    np.put_along_axis(windows, idx, pooled.data[..., None], axis=-1)

    def _backward(grad: np.ndarray):
        return (np.take_along_axis(_windows_2x2(grad), idx, axis=-1)[..., 0],)

    return emit("max_unpool_2x2", _unwindow_2x2(windows), (pooled,), _backward)


def nearest_upsample(x: Tensor, r: int) -> Tensor:
    n, c, h, w = _require_4d(x, "nearest_upsample")
    if r < 1:
        raise ShapeError(f"nearest_upsample: ratio must be >= 1, got {r}")
    out = np.repeat(np.repeat(x.data, r, axis=2), r, axis=3)

    def _backward(grad: np.ndarray):
        return (grad.reshape(n, c, h, r, w, r).sum(axis=(3, 5)),)

    return emit("nearest_upsample", out, (x,), _backward)


# ═══════════════════════════════════════════════════════════════════════════════
# PER-SAMPLE OPS (dynamic kernels)
# ═══════════════════════════════════════════════════════════════════════════════

def per_sample_pointwise(x: Tensor, w: Tensor) -> Tensor:
    """1×1 convolution with one [O, D] weight matrix per sample: x[N,D,H,W], w[N,O,D]."""
    n, d, h, wd = _require_4d(x, "per_sample_pointwise")
    if w.ndim != 3 or w.shape[0] != n or w.shape[2] != d:
        raise ShapeError(f"per_sample_pointwise: weight shape {w.shape} incompatible with {x.shape}")
    o = w.shape[1]
    x2 = x.data.reshape(n, d, h * wd)
    out = np.matmul(w.data, x2).reshape(n, o, h, wd)

    def _backward(grad: np.ndarray):
        g2 = grad.reshape(n, o, h * wd)
        g_x = np.matmul(w.data.transpose(0, 2, 1), g2).reshape(x.shape)
        g_w = np.matmul(g2, x2.transpose(0, 2, 1))
        return (g_x, g_w)

    return emit("per_sample_pointwise", out, (x, w), _backward)


def per_sample_depthwise(x: Tensor, w: Tensor, stride: int = 1) -> Tensor:
    """
    Depthwise convolution with per-sample kernels on an already padded input.

    x: [N, C, H, W]; w: [N, C, M, k, k] (M outputs per channel).
    Output: [N, C·M, OH, OW] with channel c·M + m.
    """
    n, c, _, _ = _require_4d(x, "per_sample_depthwise")
    if w.ndim != 5 or w.shape[:2] != (n, c) or w.shape[3] != w.shape[4]:
        raise ShapeError(f"per_sample_depthwise: weight shape {w.shape} incompatible with {x.shape}")
    m, k = w.shape[2], w.shape[3]
    hp, wp = x.shape[2:]
    cols = _im2col(x.data, k, k, stride, "per_sample_depthwise")
    oh, ow = cols.shape[-2:]
    out = np.einsum("ncmab,ncabhw->ncmhw", w.data, cols, optimize=True).reshape(n, c * m, oh, ow)

    def _backward(grad: np.ndarray):
        g5 = grad.reshape(n, c, m, oh, ow)
        g_w = np.einsum("ncmhw,ncabhw->ncmab", g5, cols, optimize=True)
        g_cols = np.einsum("ncmab,ncmhw->ncabhw", w.data, g5, optimize=True)
        return (_col2im(g_cols, hp, wp, stride), g_w)

    return emit("per_sample_depthwise", out, (x, w), _backward)


def weighted_window_sum(windows: Tensor, kernels: Tensor) -> Tensor:
    """out[n,c,h,w] = Σ_s windows[n,c,s,h,w] · kernels[n,s,h,w] (kernel shared across channels)."""
    if windows.ndim != 5 or kernels.ndim != 4:
        raise ShapeError("weighted_window_sum expects windows [N,C,S,H,W] and kernels [N,S,H,W]")
    n, c, s, h, w = windows.shape
    if kernels.shape != (n, s, h, w):
        raise ShapeError(f"weighted_window_sum: kernels {kernels.shape} != {(n, s, h, w)}")
    wv, kv = windows.data, kernels.data
    out = np.einsum("ncshw,nshw->nchw", wv, kv, optimize=True)

    def _backward(grad: np.ndarray):
        g_windows = grad[:, :, None] * kv[:, None]
        g_kernels = np.einsum("nchw,ncshw->nshw", grad, wv, optimize=True)
        return (g_windows, g_kernels)

    return emit("weighted_window_sum", out, (windows, kernels), _backward)
