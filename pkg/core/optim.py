"""
Stochastic gradient descent with classical momentum.
"""

from typing import Sequence
import numpy as np

from shared.exceptions import InvalidStateError
from core.tensor import Parameter


def sgd_momentum_step(params: Sequence[Parameter], lr: float, momentum: float) -> None:
    """
    v <- momentum * v + grad; theta <- theta - lr * v for trainable parameters,
    then clear every gradient.

    Raises:
        InvalidStateError: If a trainable parameter has no gradient
    """
    for param in params:
        if param.trainable and param.tensor.grad is None:
            raise InvalidStateError(f"Parameter '{param.name}' has no gradient")

    for param in params:
        if param.trainable:
            grad = param.tensor.grad.astype(param.values.dtype, copy=False)
            param.velocity = (momentum * param.velocity + grad).astype(param.values.dtype)
            param.tensor.values -= lr * param.velocity
        param.tensor.grad = None


def scale_grads(params: Sequence[Parameter], factor: float) -> None:
    """Multiply accumulated gradients in place (gradient accumulation averaging)."""
    for param in params:
        if param.tensor.grad is not None:
            param.tensor.grad = param.tensor.grad * np.asarray(factor, dtype=param.tensor.grad.dtype)
