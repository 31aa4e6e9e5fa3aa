"""
Run artifacts: metrics CSV, PGM reconstructions, kernel-map dumps
"""
import csv
import json
import re
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import structlog

from ..errors import DataIOError
from ..upsampling import KernelMap
from .metrics import MetricReport

logger = structlog.get_logger()

CSV_HEADER = ("epoch", "split", "psnr", "ssim", "mse", "mae", "loss")
_PGM_HEADER = re.compile(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6f}"


def csv_row(epoch: Optional[int], split: str, report: Optional[MetricReport], loss: Optional[float]) -> list[str]:
    values = report.as_row() if report else {}
    return [
        "" if epoch is None else str(epoch),
        split,
        _fmt(values.get("psnr")),
        _fmt(values.get("ssim")),
        _fmt(values.get("mse")),
        _fmt(values.get("mae")),
        _fmt(loss),
    ]


class MetricsCsvWriter:
    """Appends history rows; the header is written when the file is created."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", newline="", encoding="utf-8") as f:
            csv.writer(f, lineterminator="\n").writerow(CSV_HEADER)

    def write(self, epoch: Optional[int], split: str, report: Optional[MetricReport] = None, loss: Optional[float] = None) -> None:
        with open(self.path, "a", newline="", encoding="utf-8") as f:
            csv.writer(f, lineterminator="\n").writerow(csv_row(epoch, split, report, loss))

    def rows(self) -> list[dict[str, str]]:
        with open(self.path, newline="", encoding="utf-8") as f:
            return list(csv.DictReader(f))


def write_pgm(path: Path, image: np.ndarray) -> Path:
    """Binary PGM (P5, maxval 255) from a [H,W] or [1,H,W] image in [0, 1]."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise DataIOError(f"PGM needs a single-channel image, got shape {arr.shape}")
    pixels = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes())
    return path


def read_pgm(path: Path) -> np.ndarray:
    """Inverse of write_pgm; returns uint8 [H,W]."""
    raw = Path(path).read_bytes()
    header = _PGM_HEADER.match(raw)
    if header is None:
        raise DataIOError(f"{path}: not a binary PGM file")
    w, h, maxval = (int(v) for v in header.groups())
    if maxval != 255:
        raise DataIOError(f"{path}: unsupported maxval {maxval}")
    payload = raw[header.end():]
    if len(payload) != w * h:
        raise DataIOError(f"{path}: expected {w * h} pixel bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w)


def dump_reconstructions(directory: Path, preds: np.ndarray, gts: Optional[np.ndarray] = None, count: Optional[int] = None) -> list[Path]:
    """Write recon_0000.pgm … (and gt_0000.pgm … when ground truth is given)."""
    directory = Path(directory)
    n = preds.shape[0] if count is None else min(count, preds.shape[0])
    written = []
    for i in range(n):
        written.append(write_pgm(directory / f"recon_{i:04d}.pgm", preds[i]))
        if gts is not None:
            written.append(write_pgm(directory / f"gt_{i:04d}.pgm", gts[i]))
    logger.info("reconstructions_dumped", directory=str(directory), count=n)
    return written


def write_kernel_map(directory: Path, stage: str, kmap: KernelMap) -> tuple[Path, Path]:
    """<stage>.bin holds little-endian float32 kernels; <stage>.json is the sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    blob = directory / f"{stage}.bin"
    sidecar = directory / f"{stage}.json"
    blob.write_bytes(np.ascontiguousarray(kmap.kernels.data, dtype="<f4").tobytes())
    sidecar.write_text(json.dumps({"stage": stage, **kmap.sidecar()}, indent=2), encoding="utf-8")
    return blob, sidecar


def write_kernel_maps(directory: Path, maps: Iterable[tuple[str, KernelMap]]) -> dict[str, dict[str, float]]:
    stats = {}
    for stage, kmap in maps:
        write_kernel_map(directory, stage, kmap)
        stats[stage] = {"s": kmap.s, "r": kmap.r, "direction": kmap.direction.value, **kmap.stats()}
    logger.info("kernel_maps_written", directory=str(directory), stages=list(stats))
    return stats
