"""
Finite-difference gradient verification
Central differences in 64-bit against the tape gradient
"""
from typing import Callable, Sequence

import numpy as np

from ..errors import GradientError
from .tensor import Tape, Tensor, backward, no_tape

ScalarFn = Callable[..., Tensor]


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """|a−b| / max(|a|, |b|, floor), elementwise."""
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def _evaluate(f: ScalarFn, arrays: Sequence[np.ndarray]) -> float:
    with no_tape():
        out = f(*[Tensor(a, dtype=np.float64) for a in arrays])
    if out.size != 1:
        raise GradientError(f"grad_check needs a scalar function, got shape {out.shape}")
    return out.item()


def numerical_gradient(f: ScalarFn, arrays: Sequence[np.ndarray], index: int, eps: float) -> np.ndarray:
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        plus = _evaluate(f, base)
        flat[i] = original - eps
        minus = _evaluate(f, base)
        flat[i] = original
        grad.reshape(-1)[i] = (plus - minus) / (2.0 * eps)
    return grad


def analytic_gradients(f: ScalarFn, arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
    leaves = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
    with Tape() as tape:
        out = f(*leaves)
    if out.size != 1:
        raise GradientError(f"grad_check needs a scalar function, got shape {out.shape}")
    if not out.requires_grad:
        return [np.zeros_like(leaf.data) for leaf in leaves]
    backward(tape, out)
    return [leaf.grad for leaf in leaves]


def grad_check(f: ScalarFn, inputs: Sequence[Tensor | np.ndarray], eps: float = 1e-4) -> float:
    """
    Compare tape gradients with central finite differences.

    Args:
        f: Function of len(inputs) tensors returning a scalar tensor
        inputs: Points at which to check (promoted to float64)
        eps: Perturbation size

    Returns:
        Worst relative error over every coordinate of every input
    """
    arrays = [np.array(t.data if isinstance(t, Tensor) else t, dtype=np.float64) for t in inputs]
    analytic = analytic_gradients(f, arrays)
    worst = 0.0
    for index, grad in enumerate(analytic):
        numeric = numerical_gradient(f, arrays, index, eps)
        if grad.size:
            worst = max(worst, float(relative_error(grad, numeric, 1e-8).max()))
    return worst
