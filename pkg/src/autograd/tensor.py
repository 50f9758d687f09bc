"""
Tensor and Tape
Dense float64 tensors with reverse-mode automatic differentiation.

Operations are recorded on the active Tape only when at least one operand
requires a gradient, so evaluation outside a tape builds no graph and is
safe to run from several threads at once.
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import ArgumentError, DimensionError

logger = logging.getLogger(__name__)

_local = threading.local()


class Tensor:
    """
    Dense numeric array with shape and optional gradient.

    Values are held as a float64 numpy array; `values` exposes them flat in
    row-major order. Every dimension is a positive integer.
    """

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: Optional[str] = None,
        copy: bool = True,
    ):
        array = np.array(data, dtype=np.float64) if copy else np.asarray(data, dtype=np.float64)
        if any(dim <= 0 for dim in array.shape):
            raise DimensionError(f"Tensor dimensions must be positive, got shape {list(array.shape)}")
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @classmethod
    def from_values(cls, shape: Sequence[int], values: Sequence[float], requires_grad: bool = False) -> "Tensor":
        """Build a tensor from a flat row-major value list"""
        flat = np.asarray(values, dtype=np.float64)
        if int(np.prod(shape)) != flat.size:
            raise DimensionError(f"shape {list(shape)} does not hold {flat.size} values")
        return cls(flat.reshape(tuple(shape)), requires_grad=requires_grad)

    @property
    def shape(self) -> List[int]:
        return list(self.data.shape)

    @property
    def values(self) -> np.ndarray:
        return self.data.reshape(-1)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ArgumentError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


class Context:
    """Values saved by a forward rule for its backward rule"""

    def __init__(self):
        self.saved: Tuple[Any, ...] = ()
        self.values: Dict[str, Any] = {}

    def save_for_backward(self, *items: Any):
        self.saved = items

    def save(self, **kwargs: Any):
        self.values.update(kwargs)


@dataclass
class Node:
    """One recorded operation: operand references plus the rule to differentiate it"""
    function: type
    ctx: Context
    inputs: Tuple[Tensor, ...]
    output: Tensor


@dataclass
class Tape:
    """
    Ordered record of operations.

    Used as a context manager; operations executed inside the block are
    appended in execution order, which is a topological order of the graph.
    """
    nodes: List[Node] = field(default_factory=list)

    def record(self, node: Node):
        self.nodes.append(node)

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _stack().pop()
        return False


def _stack() -> List[Tape]:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def active_tape() -> Optional[Tape]:
    """Innermost tape of the calling thread, if any"""
    stack = _stack()
    return stack[-1] if stack else None


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement `forward(ctx, *arrays, **kwargs)` on raw numpy
    arrays and `backward(ctx, grad)` returning one gradient (or None) per
    tensor operand.
    """

    @staticmethod
    def forward(ctx: Context, *args: Any, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs: Any) -> Tensor:
        ctx = Context()
        output = cls.forward(ctx, *[t.data for t in inputs], **kwargs)
        tape = active_tape()
        tracked = tape is not None and any(t.requires_grad for t in inputs)
        result = Tensor(output, requires_grad=tracked, copy=False)
        if tracked:
            tape.record(Node(function=cls, ctx=ctx, inputs=inputs, output=result))
        return result


def backward(loss: Tensor, tape: Tape):
    """
    Propagate d(loss)/d(x) to every requires_grad leaf reached through the tape.

    Gradients are added to existing `.grad` arrays, so replaying a tape
    without clearing doubles them.

    Args:
        loss: Single-element tensor
        tape: Tape the loss was recorded on
    """
    if loss.size != 1:
        raise ArgumentError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ArgumentError("loss does not depend on any tensor that requires a gradient")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    tensors: Dict[int, Tensor] = {id(loss): loss}
    produced = set()

    for node in reversed(tape.nodes):
        key = id(node.output)
        produced.add(key)
        grad = grads.pop(key, None)
        if grad is None:
            continue
        input_grads = node.function.backward(node.ctx, grad)
        for operand, operand_grad in zip(node.inputs, input_grads):
            if operand_grad is None or not operand.requires_grad:
                continue
            operand_key = id(operand)
            tensors[operand_key] = operand
            if operand_key in grads:
                grads[operand_key] = grads[operand_key] + operand_grad
            else:
                grads[operand_key] = operand_grad

    for key, grad in grads.items():
        if key in produced:
            continue
        leaf = tensors[key]
        leaf.grad = np.array(grad, dtype=np.float64) if leaf.grad is None else leaf.grad + grad
