"""
Run Journal
Append-only JSONL record of what a training/evaluation run did
"""
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Optional
import json

from pydantic import BaseModel, Field
import structlog

logger = structlog.get_logger()


class RunEventType(str, Enum):
    """Types of run events"""
    RUN_STARTED = "run_started"
    EPOCH_COMPLETED = "epoch_completed"
    LR_DECAYED = "lr_decayed"
    CHECKPOINT_WRITTEN = "checkpoint_written"
    EVALUATION_COMPLETED = "evaluation_completed"
    RUN_FAILED = "run_failed"
    RUN_COMPLETED = "run_completed"


class RunEvent(BaseModel):
    """Single journal entry"""
    timestamp: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    event_type: RunEventType
    run_name: str
    epoch: Optional[int] = None
    details: dict[str, Any] = Field(default_factory=dict)
    outcome: str = "success"  # success, failure


class RunLogger:
    """
    Writes run events to structlog and, when a path is given, to a JSONL file.

    Args:
        run_name: Identifier stamped on every event
        log_file_path: Journal location (None disables the file)
    """

    def __init__(self, run_name: str, log_file_path: Optional[Path] = None):
        self.run_name = run_name
        self.log_file_path = Path(log_file_path) if log_file_path else None
        if self.log_file_path:
            self.log_file_path.parent.mkdir(parents=True, exist_ok=True)

    def log(self, event_type: RunEventType, epoch: Optional[int] = None, outcome: str = "success", **details: Any) -> RunEvent:
        event = RunEvent(event_type=event_type, run_name=self.run_name, epoch=epoch, details=details, outcome=outcome)
        log_func = logger.error if outcome == "failure" else logger.info
        log_func(
            f"run_{event.event_type.value}",
            run=self.run_name,
            **({"epoch": epoch} if epoch is not None else {}),
            **details,
        )
        if self.log_file_path:
            with open(self.log_file_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(event.model_dump(mode="json"), default=str) + "\n")
        return event

    def read_events(self) -> list[RunEvent]:
        if not self.log_file_path or not self.log_file_path.exists():
            return []
        with open(self.log_file_path, encoding="utf-8") as f:
            return [RunEvent.model_validate_json(line) for line in f if line.strip()]
