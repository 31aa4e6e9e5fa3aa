"""A2U Lab Observability Layer"""
from .metrics import EpochMetrics, TrainingMetricsCollector
from .run_log import RunEvent, RunEventType, RunLogger

__all__ = ["EpochMetrics", "TrainingMetricsCollector", "RunEvent", "RunEventType", "RunLogger"]
