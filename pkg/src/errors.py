"""
Error hierarchy for A2U Lab
Every error carries the CLI exit code it maps to
"""
from typing import Any, Optional


class A2ULabError(Exception):
    """Base class for all library errors."""

    exit_code: int = 1

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_dict(self) -> dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            **self.context,
        }


# ─── Validation (exit 2) ──────────────────────────────────────────────────────

class ConfigValidationError(A2ULabError):
    """Invalid configuration, unknown keys or an unsupported combination."""

    exit_code = 2


class ShapeError(ConfigValidationError):
    """Shape, divisibility or rank-bound violation."""


# ─── Numerical failures (exit 3) ──────────────────────────────────────────────

class NumericalError(A2ULabError):
    exit_code = 3


class NonFiniteError(NumericalError):
    """An op produced NaN or Inf."""

    def __init__(self, op: str, message: Optional[str] = None):
        super().__init__(message or f"non-finite values produced by {op}", op=op)
        self.op = op


class DivergenceError(NumericalError):
    """Training loss became non-finite."""


class GradientError(NumericalError):
    """Backward pass cannot run (non-scalar or detached loss)."""


class GradCheckFailure(NumericalError):
    """Finite-difference check exceeded its tolerance."""


class ParamCountMismatch(NumericalError):
    """Instantiated parameter count disagrees with the closed form."""


# ─── I/O (exit 4) ─────────────────────────────────────────────────────────────

class DataIOError(A2ULabError):
    exit_code = 4


class IdxFormatError(DataIOError):
    """Malformed IDX container."""


class CheckpointError(DataIOError):
    """Checkpoint missing, corrupt or not matching the model spec."""
