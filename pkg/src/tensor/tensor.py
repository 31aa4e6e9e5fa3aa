"""
Tensor and Tape - reverse-mode differentiation core
"""
import itertools
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np

from ..errors import GradientError, NonFiniteError, ShapeError

DEFAULT_DTYPE = np.float32

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_node_ids = itertools.count(1)
_active_tape: ContextVar[Optional["Tape"]] = ContextVar("active_tape", default=None)


class Tensor:
    """
    Dense row-major real array, optionally gradient-tracked.

    Data is never mutated after construction; ops return new tensors.
    Optimizers replace `data` wholesale on leaves.
    """

    __slots__ = ("data", "grad", "requires_grad", "node_id", "name")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype: Optional[np.dtype] = None,
        name: Optional[str] = None,
    ):
        arr = np.array(data, dtype=dtype or _infer_dtype(data), copy=True)
        arr.flags.writeable = False
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.node_id: Optional[int] = None
        self.name = name

    @classmethod
    def _from_op(cls, arr: np.ndarray, op: str) -> "Tensor":
        """Wrap a freshly computed array without copying."""
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(op)
        out = cls.__new__(cls)
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        out.data = arr
        out.grad = None
        out.requires_grad = False
        out.node_id = None
        out.name = None
        return out

    # ── introspection ────────────────────────────────────────────────────────

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return np.array(self.data)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor._from_op(self.data, "detach")

    def astype(self, dtype: np.dtype) -> "Tensor":
        return Tensor(self.data, requires_grad=self.requires_grad, dtype=dtype, name=self.name)

    def assign(self, arr: np.ndarray) -> None:
        """Replace leaf data (optimizer updates and checkpoint loads only)."""
        if arr.shape != self.data.shape:
            raise ShapeError(
                f"cannot assign shape {arr.shape} to tensor of shape {self.shape}",
                name=self.name,
            )
        new = np.array(arr, dtype=self.data.dtype, copy=True)
        new.flags.writeable = False
        self.data = new

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"


def _infer_dtype(data: ArrayLike) -> np.dtype:
    if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
        return data.dtype
    return DEFAULT_DTYPE


def _ensure_node(t: Tensor) -> int:
    if t.node_id is None:
        t.node_id = next(_node_ids)
    return t.node_id


@dataclass
class TapeRecord:
    """One recorded op: enough to replay its backward."""
    op: str
    input_ids: tuple[int, ...]
    output_id: int
    backward_fn: BackwardFn
    needs_grad: tuple[bool, ...]


@dataclass(eq=False)
class Tape:
    """
    Ordered op records for reverse accumulation.

    Usage:
        with Tape() as tape:
            loss = model(x)
        grads = backward(tape, loss)
    """
    records: list[TapeRecord] = field(default_factory=list)
    leaves: dict[int, Tensor] = field(default_factory=dict)
    output_ids: set[int] = field(default_factory=set)
    _token: Any = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc: Any) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def record(
        self,
        op: str,
        inputs: Sequence[Tensor],
        output: Tensor,
        backward_fn: BackwardFn,
    ) -> None:
        input_ids = []
        for t in inputs:
            node = _ensure_node(t)
            input_ids.append(node)
            if t.requires_grad and not self.produces(node):
                self.leaves.setdefault(node, t)
        output.node_id = next(_node_ids)
        self.records.append(TapeRecord(
            op=op,
            input_ids=tuple(input_ids),
            output_id=output.node_id,
            backward_fn=backward_fn,
            needs_grad=tuple(t.requires_grad for t in inputs),
        ))
        self.output_ids.add(output.node_id)

    def produces(self, node_id: int) -> bool:
        return node_id in self.output_ids


def current_tape() -> Optional[Tape]:
    return _active_tape.get()


class no_tape:
    """Context manager that suspends recording (inference, finite differences)."""

    def __enter__(self) -> None:
        self._token = _active_tape.set(None)

    def __exit__(self, *exc: Any) -> None:
        _active_tape.reset(self._token)


def emit(op: str, out: np.ndarray, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """
    Wrap an op result and record it on the active tape.

    `backward_fn` maps the output gradient to one gradient (or None) per input.
    Nothing is recorded when no tape is active or no input requires grad.
    """
    result = Tensor._from_op(out, op)
    tape = current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        result.requires_grad = True
        tape.record(op, inputs, result, backward_fn)
    return result


def backward(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    """
    Reverse accumulation over the tape.

    Populates `.grad` on every tracked leaf reached from `loss` and returns
    the leaf gradients keyed by node id. Records are visited once, in
    reverse order, so results are deterministic for a given tape.
    """
    if loss.size != 1:
        raise GradientError(f"loss must be scalar, got shape {loss.shape}")
    if loss.node_id is None or not (tape.produces(loss.node_id) or loss.node_id in tape.leaves):
        raise GradientError("loss is not on the tape (detached)")

    grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    for record in reversed(tape.records):
        g_out = grads.pop(record.output_id, None)
        if g_out is None:
            continue
        g_inputs = record.backward_fn(g_out)
        for node, needs, g in zip(record.input_ids, record.needs_grad, g_inputs):
            if not needs or g is None:
                continue
            if node in grads:
                grads[node] = grads[node] + g
            else:
                grads[node] = np.asarray(g)

    leaf_grads: dict[int, np.ndarray] = {}
    for node, leaf in tape.leaves.items():
        g = grads.get(node)
        if g is None:
            g = np.zeros_like(leaf.data)
        g = np.asarray(g, dtype=leaf.dtype).reshape(leaf.shape)
        leaf.grad = g
        leaf_grads[node] = g
    return leaf_grads
