"""
Adagrad Optimizer
Per-parameter accumulators of squared gradients and the Adagrad update rule.
"""

import logging
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from autograd.tensor import Tensor
from errors import GradientStateError

logger = logging.getLogger(__name__)

DEFAULT_LEARNING_RATE = 0.05
DEFAULT_EPSILON = 1e-8


class AdagradState(BaseModel):
    """Squared-gradient accumulator for one parameter"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    accumulator: np.ndarray
    learning_rate: float = Field(default=DEFAULT_LEARNING_RATE, gt=0)
    epsilon: float = Field(default=DEFAULT_EPSILON, ge=0)

    @classmethod
    def for_param(
        cls, param: Tensor, learning_rate: float = DEFAULT_LEARNING_RATE, epsilon: float = DEFAULT_EPSILON
    ) -> "AdagradState":
        return cls(accumulator=np.zeros_like(param.data), learning_rate=learning_rate, epsilon=epsilon)


def adagrad_step(param: Tensor, state: AdagradState) -> Tuple[Tensor, AdagradState]:
    """
    Apply one Adagrad update in place and clear the gradient.

    accumulator += grad^2; param -= lr * grad / (sqrt(accumulator) + epsilon).
    Entries whose gradient is exactly zero are left untouched, which keeps
    embedding columns of absent features still.

    Args:
        param: Tensor with a populated grad
        state: Its accumulator

    Returns:
        The same (mutated) param and state
    """
    if param.grad is None:
        raise GradientStateError(f"parameter {param.name or param.shape} has no gradient")
    grad = param.grad
    state.accumulator += grad * grad
    touched = grad != 0
    denom = np.sqrt(state.accumulator) + state.epsilon
    update = np.divide(grad, denom, out=np.zeros_like(grad), where=touched)
    param.data -= state.learning_rate * update
    param.grad = None
    return param, state


class Adagrad:
    """
    Adagrad over a named set of parameters.

    Parameters without a gradient after backward (not reached by the loss)
    are skipped and keep their accumulators.
    """

    def __init__(
        self,
        params: Dict[str, Tensor],
        learning_rate: float = DEFAULT_LEARNING_RATE,
        epsilon: float = DEFAULT_EPSILON,
    ):
        self.params = params
        self.states: Dict[str, AdagradState] = {
            name: AdagradState.for_param(p, learning_rate, epsilon) for name, p in params.items()
        }

    def step(self) -> int:
        """Update every parameter holding a gradient; returns how many were updated"""
        updated = 0
        for name, param in self.params.items():
            if param.grad is None:
                continue
            adagrad_step(param, self.states[name])
            updated += 1
        logger.debug(f"Adagrad step updated {updated}/{len(self.params)} parameters")
        return updated

    def zero_grad(self, names: Optional[Iterable[str]] = None):
        for name in names or self.params:
            self.params[name].grad = None
