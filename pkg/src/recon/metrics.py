"""
Reconstruction quality metrics
PSNR, SSIM, MSE and MAE for images in [0, 1], averaged per image
"""
from typing import Optional

import numpy as np
from pydantic import BaseModel
from skimage.metrics import structural_similarity

from ..errors import ShapeError

PSNR_CAP = 99.0
SSIM_MIN_SIDE = 11  # gaussian window, sigma 1.5 truncated at 3.5 sigma
_PSNR_FLOOR_MSE = 1e-10


class ImageMetrics(BaseModel):
    psnr: float
    ssim: float
    mse: float
    mae: float


class MetricReport(BaseModel):
    """Batch means; per_image is filled only when requested."""
    psnr: float
    ssim: float
    mse: float
    mae: float
    count: int
    per_image: Optional[list[ImageMetrics]] = None

    def as_row(self) -> dict[str, float]:
        return {"psnr": self.psnr, "ssim": self.ssim, "mse": self.mse, "mae": self.mae}


def psnr(pred: np.ndarray, gt: np.ndarray) -> float:
    """10·log10(1 / mean squared error), capped for identical images."""
    mse = float(np.mean((np.asarray(pred, np.float64) - np.asarray(gt, np.float64)) ** 2))
    if mse < _PSNR_FLOOR_MSE:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(1.0 / mse)))


def ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    """Gaussian-window SSIM (σ=1.5, K1=0.01, K2=0.03) over a single-channel image."""
    return float(
        structural_similarity(
            np.asarray(gt, np.float64),
            np.asarray(pred, np.float64),
            data_range=1.0,
            gaussian_weights=True,
            sigma=1.5,
            use_sample_covariance=False,
        )
    )


def image_metrics(pred: np.ndarray, gt: np.ndarray) -> ImageMetrics:
    """Metrics for one 2-D image pair. MSE is reported as its root (RMSE)."""
    diff = np.asarray(pred, np.float64) - np.asarray(gt, np.float64)
    return ImageMetrics(
        psnr=psnr(pred, gt),
        ssim=ssim(pred, gt),
        mse=float(np.sqrt(np.mean(diff ** 2))),
        mae=float(np.mean(np.abs(diff))),
    )


def _as_images(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim == 2:
        return arr[None]
    if arr.ndim == 4:
        if arr.shape[1] != 1:
            raise ShapeError(f"metrics expect single-channel images, got {arr.shape[1]} channels")
        return arr[:, 0]
    if arr.ndim == 3:
        return arr
    raise ShapeError(f"metrics expect [H,W], [N,H,W] or [N,1,H,W], got shape {arr.shape}")


def metrics(pred: np.ndarray, gt: np.ndarray, keep_per_image: bool = False) -> MetricReport:
    """
    Compare predictions against ground truth.

    Args:
        pred: Predicted images in [0, 1]
        gt: Ground truth of the same shape
        keep_per_image: Attach the per-image breakdown to the report

    Returns:
        MetricReport holding the mean over images
    """
    p, g = _as_images(pred), _as_images(gt)
    if p.shape != g.shape:
        raise ShapeError(f"prediction shape {p.shape} does not match ground truth {g.shape}")
    if p.shape[0] == 0:
        raise ShapeError("metrics need at least one image")
    if min(p.shape[1:]) < SSIM_MIN_SIDE:
        raise ShapeError(f"SSIM needs images of at least {SSIM_MIN_SIDE}x{SSIM_MIN_SIDE}, got {p.shape[1:]}")
    per_image = [image_metrics(pi, gi) for pi, gi in zip(p, g)]
    return MetricReport(
        psnr=float(np.mean([m.psnr for m in per_image])),
        ssim=float(np.mean([m.ssim for m in per_image])),
        mse=float(np.mean([m.mse for m in per_image])),
        mae=float(np.mean([m.mae for m in per_image])),
        count=len(per_image),
        per_image=per_image if keep_per_image else None,
    )
