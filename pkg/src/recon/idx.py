"""
IDX image containers (MNIST / Fashion-MNIST)
Big-endian header: magic 0x00000803, then N, rows, cols; unsigned-byte payload
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import structlog

from ..errors import DataIOError, IdxFormatError
from ..tensor import Tensor, no_tape
from ..upsampling import resample_bilinear

logger = structlog.get_logger()

IDX_IMAGE_MAGIC = 0x00000803
IDX_HEADER_BYTES = 16
IMAGE_SIDE = 28
TARGET_SIDE = 32

DATASET_FILES = {
    "train": "train-images-idx3-ubyte",
    "test": "t10k-images-idx3-ubyte",
}
DATASETS = ("mnist", "fashion-mnist")


@dataclass
class IdxDataset:
    """Images scaled to [0, 1], shape [N, 1, rows, cols]."""
    images: np.ndarray
    source: Path
    split: str = "train"
    dataset: str = "mnist"

    @property
    def count(self) -> int:
        return int(self.images.shape[0])

    def subset(self, limit: Optional[int]) -> "IdxDataset":
        if limit is None or limit >= self.count:
            return self
        return IdxDataset(images=self.images[:limit], source=self.source, split=self.split, dataset=self.dataset)

    def resized(self, side: int = TARGET_SIDE, batch_size: int = 1000) -> np.ndarray:
        """Bilinear resize of every image to side×side."""
        chunks = [
            resize_to_32(self.images[i:i + batch_size], side=side)
            for i in range(0, self.count, batch_size)
        ]
        if not chunks:
            return np.zeros((0, 1, side, side), dtype=np.float32)
        return np.concatenate(chunks, axis=0)


def load_idx(
    path: Path,
    split: str = "train",
    dataset: str = "mnist",
    expected_hw: Optional[tuple[int, int]] = (IMAGE_SIDE, IMAGE_SIDE),
) -> IdxDataset:
    """
    Parse an IDX3 image file.

    Raises:
        DataIOError: file missing or unreadable
        IdxFormatError: bad magic, truncated payload or unexpected dims
    """
    path = Path(path)
    if not path.is_file():
        raise DataIOError(f"IDX file not found: {path}", path=str(path))
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}", path=str(path)) from exc

    if len(raw) < IDX_HEADER_BYTES:
        raise IdxFormatError(f"{path.name}: truncated header ({len(raw)} bytes)", path=str(path))
    magic, n, rows, cols = (int(v) for v in np.frombuffer(raw[:IDX_HEADER_BYTES], dtype=">u4"))
    if magic != IDX_IMAGE_MAGIC:
        raise IdxFormatError(f"{path.name}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}", path=str(path))
    if expected_hw is not None and (rows, cols) != tuple(expected_hw):
        raise IdxFormatError(f"{path.name}: image dims {rows}x{cols}, expected {expected_hw[0]}x{expected_hw[1]}")

    payload = n * rows * cols
    available = len(raw) - IDX_HEADER_BYTES
    if available < payload:
        raise IdxFormatError(f"{path.name}: truncated payload ({available} of {payload} bytes)", path=str(path))
    if available > payload:
        raise IdxFormatError(f"{path.name}: {available - payload} trailing bytes after {n} images", path=str(path))

    pixels = np.frombuffer(raw, dtype=np.uint8, offset=IDX_HEADER_BYTES).reshape(n, 1, rows, cols)
    images = pixels.astype(np.float32) / 255.0
    logger.info("idx_loaded", path=str(path), count=n, rows=rows, cols=cols, split=split, dataset=dataset)
    return IdxDataset(images=images, source=path, split=split, dataset=dataset)


def write_idx(path: Path, images: np.ndarray) -> Path:
    """Write [N, H, W] (or [N, 1, H, W]) images; floats are read as [0, 1] and rounded."""
    arr = np.asarray(images)
    if arr.ndim == 4 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 3:
        raise IdxFormatError(f"write_idx expects [N, H, W] images, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(np.asarray(arr, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    header = np.array([IDX_IMAGE_MAGIC, *arr.shape], dtype=">u4").tobytes()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(header + arr.tobytes())
    return path


def dataset_path(data_dir: Path, split: str, dataset: str = "mnist") -> Path:
    """<data_dir>/<dataset>/<standard IDX name>, falling back to <data_dir>/<name>."""
    if split not in DATASET_FILES:
        raise DataIOError(f"unknown split {split!r}")
    name = DATASET_FILES[split]
    nested = Path(data_dir) / dataset / name
    return nested if nested.exists() else Path(data_dir) / name


def resize_to_32(images: np.ndarray | Tensor, side: int = TARGET_SIDE) -> np.ndarray:
    """Bilinear (align-corners=false) resize of [1,H,W] or [N,1,H,W] images; values stay in [0, 1]."""
    arr = np.asarray(images.data if isinstance(images, Tensor) else images, dtype=np.float32)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    with no_tape():
        out = resample_bilinear(Tensor(arr), side, side).numpy()
    out = np.clip(out, 0.0, 1.0)
    return out[0] if single else out
