"""
Metrics Collection for A2U Lab
Tracks training throughput, epoch timings and evaluation latency
"""
import time
from typing import Any, Optional
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
import structlog

logger = structlog.get_logger()


@dataclass
class EpochMetrics:
    """Metrics for a single training epoch"""
    epoch: int
    start_time: float
    end_time: Optional[float] = None
    steps: int = 0
    images: int = 0
    mean_loss: Optional[float] = None
    lr: Optional[float] = None


class TrainingMetricsCollector:
    """
    Collects wall-clock metrics for training and evaluation runs.

    Features:
    - Operation latency tracking (forward, backward, evaluation)
    - Per-epoch step/image counts and throughput
    - Session summary for the run journal
    """

    def __init__(self, run_name: str = "a2u-lab"):
        self.run_name = run_name
        self._current: dict[int, EpochMetrics] = {}
        self._completed: list[EpochMetrics] = []
        self._latency_ms: dict[str, list[int]] = {}

    @contextmanager
    def measure_latency(self, operation: str):
        """
        Context manager to measure operation latency.

        Usage:
            with metrics.measure_latency("evaluation"):
                report = evaluate_model(model, images)
        """
        start = time.perf_counter()
        try:
            yield
        finally:
            duration_ms = int((time.perf_counter() - start) * 1000)
            self._latency_ms.setdefault(operation, []).append(duration_ms)
            logger.debug("operation_latency", operation=operation, duration_ms=duration_ms)

    def start_epoch(self, epoch: int, lr: float) -> EpochMetrics:
        metrics = EpochMetrics(epoch=epoch, start_time=time.perf_counter(), lr=lr)
        self._current[epoch] = metrics
        return metrics

    def record_step(self, epoch: int, batch_size: int) -> None:
        metrics = self._current.get(epoch)
        if metrics:
            metrics.steps += 1
            metrics.images += batch_size

    def end_epoch(self, epoch: int, mean_loss: float) -> Optional[EpochMetrics]:
        """Close an epoch and log its throughput."""
        metrics = self._current.pop(epoch, None)
        if not metrics:
            return None
        metrics.end_time = time.perf_counter()
        metrics.mean_loss = mean_loss
        self._completed.append(metrics)

        duration_s = metrics.end_time - metrics.start_time
        logger.info(
            "epoch_metrics",
            epoch=epoch,
            steps=metrics.steps,
            loss=round(mean_loss, 6),
            lr=metrics.lr,
            duration_s=round(duration_s, 2),
            images_per_s=round(metrics.images / duration_s, 1) if duration_s > 0 else None,
        )
        return metrics

    def get_summary(self) -> dict[str, Any]:
        """Get aggregated metrics summary."""
        total_steps = sum(m.steps for m in self._completed)
        total_s = sum((m.end_time or m.start_time) - m.start_time for m in self._completed)
        return {
            "run": self.run_name,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "epochs": len(self._completed),
            "steps": total_steps,
            "train_seconds": round(total_s, 2),
            "avg_step_ms": int(total_s * 1000 / total_steps) if total_steps else 0,
            "latency_ms": {
                op: {"count": len(v), "avg": sum(v) // len(v)} for op, v in self._latency_ms.items() if v
            },
        }
