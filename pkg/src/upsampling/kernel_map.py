"""
Kernel maps and the unified kernel-application primitive
output = Σ over a source window of (per-position kernel · window value)
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..errors import ShapeError
from ..tensor import Tensor, nearest_upsample, pad2d, reshape, unfold, weighted_window_sum


class Direction(str, Enum):
    UP = "up"
    DOWN = "down"


@dataclass
class KernelMap:
    """
    One s×s kernel per output position, row-major within the window.

    kernels: [N, s², H', W'] where (H', W') is the output resolution.
    `normalized` is False only for raw logits handed over on purpose.
    """
    kernels: Tensor
    s: int
    r: int
    direction: Direction = Direction.UP
    normalized: bool = True

    def __post_init__(self):
        self.direction = Direction(self.direction)
        if self.s < 1 or self.r < 1:
            raise ShapeError(f"kernel map needs s >= 1 and r >= 1, got s={self.s}, r={self.r}")
        if self.kernels.ndim != 4 or self.kernels.shape[1] != self.s * self.s:
            raise ShapeError(
                f"kernels must be [N, {self.s * self.s}, H', W'], got {self.kernels.shape}"
            )

    @property
    def batch(self) -> int:
        return self.kernels.shape[0]

    @property
    def output_hw(self) -> tuple[int, int]:
        return self.kernels.shape[2], self.kernels.shape[3]

    def sidecar(self) -> dict:
        return {
            "shape": list(self.kernels.shape),
            "s": self.s,
            "r": self.r,
            "direction": self.direction.value,
            "dtype": "float32",
            "byte_order": "little",
        }

    def stats(self) -> dict[str, float]:
        """min/max over all entries and mean per-position spread (max − min within a kernel)."""
        k = self.kernels.data
        spread = k.max(axis=1) - k.min(axis=1)
        return {
            "min": float(k.min()),
            "max": float(k.max()),
            "mean_spread": float(spread.mean()),
            "max_spread": float(spread.max()),
        }


def window_padding(s: int) -> tuple[int, int]:
    """Zero padding (before, after) that centers an s-wide window; even s extends bottom/right."""
    return (s - 1) // 2, s // 2


def _check_normalized(kmap: KernelMap) -> None:
    if not kmap.normalized:
        return
    k = kmap.kernels.data
    if kmap.s > 1 and (k.min() < -1e-6 or not np.allclose(k.sum(axis=1), 1.0, atol=1e-4)):
        raise ShapeError("kernel map flagged normalized but slices are not convex weights")


def apply_kernel_map(source: Tensor, kmap: KernelMap) -> Tensor:
    """
    Reassemble `source` with per-position kernels.

    UP: output (i', j') aggregates the s×s window of source centered at
    (⌊i'/r⌋, ⌊j'/r⌋). DOWN: output (i, j) aggregates the s×s window whose
    top-left corner is r·i − (s − r)/2. Windows are zero-padded; the kernel
    is shared across channels.

    Kernel weight landing on padding is dropped, so border outputs of a
    constant source fall below the constant.
    """
    if source.ndim != 4:
        raise ShapeError(f"apply_kernel_map expects NCHW source, got {source.shape}")
    n, c, h, w = source.shape
    if kmap.batch != n:
        raise ShapeError(f"kernel map batch {kmap.batch} != source batch {n}")
    _check_normalized(kmap)
    s, r = kmap.s, kmap.r

    if kmap.direction == Direction.UP:
        if kmap.output_hw != (r * h, r * w):
            raise ShapeError(
                f"up kernel map of size {kmap.output_hw} inconsistent with source {h}x{w} and r={r}"
            )
        before, after = window_padding(s)
        padded = pad2d(source, before, after, before, after) if s > 1 else source
        cols = reshape(unfold(padded, s), (n, c * s * s, h, w))
        windows = reshape(nearest_upsample(cols, r), (n, c, s * s, r * h, r * w))
        return weighted_window_sum(windows, kmap.kernels)

    if s < r or (s - r) % 2:
        raise ShapeError(f"down kernel side s={s} with r={r}: s - r must be even and non-negative")
    if h % r or w % r or kmap.output_hw != (h // r, w // r):
        raise ShapeError(
            f"down kernel map of size {kmap.output_hw} inconsistent with source {h}x{w} and r={r}"
        )
    cols = unfold(source, s, stride=r, pad=(s - r) // 2)
    windows = reshape(cols, (n, c, s * s, h // r, w // r))
    return weighted_window_sum(windows, kmap.kernels)
