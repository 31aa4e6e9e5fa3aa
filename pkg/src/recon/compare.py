"""
Upsampler comparison sweep
Trains the toy net once per down/up pairing with a shared seed and collects test metrics
"""
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel
import structlog

from ..errors import ConfigValidationError
from ..upsampling import UpsamplerKind
from .metrics import MetricReport
from .toynet import DownsamplerKind, ToyNetSpec, UpsamplerSpec
from .train import TrainConfig, train

logger = structlog.get_logger()


class CompareRow(BaseModel):
    """One row of the comparison table."""
    label: str
    slug: str
    upsampler: UpsamplerSpec
    downsampler: DownsamplerKind


class CompareResult(BaseModel):
    label: str
    params: int
    final_loss: float
    report: Optional[MetricReport] = None


def _row(label: str, slug: str, kind: UpsamplerKind, down: DownsamplerKind) -> CompareRow:
    return CompareRow(label=label, slug=slug, upsampler=UpsamplerSpec(kind=kind), downsampler=down)


# IndexNet runs with its holistic index block (k_enc=4), A2U with the toy preset.
COMPARISON_ROWS: tuple[CompareRow, ...] = (
    _row("Conv/2-Nearest", "conv2-nearest", UpsamplerKind.NEAREST, DownsamplerKind.STRIDE2_CONV),
    _row("Conv/2-Bilinear", "conv2-bilinear", UpsamplerKind.BILINEAR, DownsamplerKind.STRIDE2_CONV),
    _row("Conv/2-Deconv", "conv2-deconv", UpsamplerKind.DECONV, DownsamplerKind.STRIDE2_CONV),
    _row("P.S.", "ps", UpsamplerKind.PIXEL_SHUFFLE, DownsamplerKind.STRIDE2_CONV),
    _row("MaxPool-MaxUnpool", "maxpool-maxunpool", UpsamplerKind.MAX_UNPOOL, DownsamplerKind.MAXPOOL),
    _row("MaxPool-CARAFE", "maxpool-carafe", UpsamplerKind.CARAFE, DownsamplerKind.MAXPOOL),
    _row("MaxPool-IndexNet", "maxpool-indexnet", UpsamplerKind.INDEXNET, DownsamplerKind.MAXPOOL),
    _row("MaxPool-A2U", "maxpool-a2u", UpsamplerKind.A2U, DownsamplerKind.MAXPOOL),
)


def select_rows(slugs: Optional[Sequence[str]] = None) -> list[CompareRow]:
    if not slugs:
        return list(COMPARISON_ROWS)
    by_slug = {row.slug: row for row in COMPARISON_ROWS}
    unknown = [s for s in slugs if s not in by_slug]
    if unknown:
        raise ConfigValidationError(f"unknown comparison rows {unknown}; choose from {sorted(by_slug)}")
    return [by_slug[s] for s in slugs]


def compare_upsamplers(
    base: TrainConfig,
    train_images: np.ndarray,
    test_images: np.ndarray,
    rows: Optional[Sequence[CompareRow]] = None,
) -> list[CompareResult]:
    """
    Train one network per row and report its final test metrics.

    Every row reuses `base` (seed, schedule, data sizes); only the network's
    upsampler and downsampler change. Row outputs go to <output_dir>/<slug>.
    """
    results = []
    for row in rows or COMPARISON_ROWS:
        net = ToyNetSpec.validated(
            **{**base.net.model_dump(exclude={"upsampler", "downsampler"}), "upsampler": row.upsampler, "downsampler": row.downsampler}
        )
        cfg = base.model_copy(update={"net": net, "output_dir": Path(base.output_dir) / row.slug})
        logger.info("comparison_row_started", row=row.label)
        outcome = train(cfg, train_images, test_images, run_name=row.slug)
        results.append(
            CompareResult(
                label=row.label,
                params=outcome.model.count_params(),
                final_loss=outcome.final_loss,
                report=outcome.final_test,
            )
        )
    return results
