"""
Finite-Difference Gradient Check
Compares tape gradients with central differences.
"""

import logging
from typing import Callable, Dict, Sequence

import numpy as np

from autograd.tensor import Tape, Tensor, backward

logger = logging.getLogger(__name__)


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar fn() with respect to every entry of tensor"""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        upper = fn().item()
        flat[i] = original - h
        lower = fn().item()
        flat[i] = original
        out[i] = (upper - lower) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """max |a - n| / max(|a|, |n|, floor) over all entries"""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale)) if analytic.size else 0.0


def gradcheck(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    h: float = 1e-5,
    floor: float = 1e-6,
) -> float:
    """
    Largest relative error between tape and finite-difference gradients.

    Args:
        fn: Builds a scalar loss from the tensors; called once on a tape and
            2 * size more times without one
        tensors: Tensors to check; must have requires_grad set
        h: Finite-difference step
        floor: Denominator floor so entries that are both ~0 compare absolutely

    Returns:
        Maximum relative error over all entries of all tensors
    """
    errors = gradcheck_report(fn, {str(i): t for i, t in enumerate(tensors)}, h=h, floor=floor)
    return max(errors.values()) if errors else 0.0


def gradcheck_report(
    fn: Callable[[], Tensor],
    named: Dict[str, Tensor],
    h: float = 1e-5,
    floor: float = 1e-6,
) -> Dict[str, float]:
    """Per-tensor relative errors, keyed like `named`"""
    for tensor in named.values():
        tensor.grad = None
    with Tape() as tape:
        loss = fn()
    backward(loss, tape)

    errors: Dict[str, float] = {}
    for name, tensor in named.items():
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        numeric = numerical_gradient(fn, tensor, h=h)
        errors[name] = relative_error(analytic, numeric, floor=floor)
        tensor.grad = None
    worst = max(errors, key=errors.get) if errors else None
    if worst is not None:
        logger.debug(f"gradcheck worst tensor {worst}: {errors[worst]:.3e}")
    return errors
