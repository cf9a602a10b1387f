"""
Reverse-mode automatic differentiation over numpy arrays.

Each differentiable op returns a Tensor whose GraphNode records its parents and a
backward function mapping the output gradient to one gradient per parent.
"""

from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple
import numpy as np

from shared.exceptions import ValidationException

_default_dtype = np.float32

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def get_default_dtype() -> type:
    """Floating dtype used for new tensors."""
    return _default_dtype


def set_default_dtype(dtype: type) -> None:
    """Select 32- or 64-bit arithmetic for new tensors."""
    global _default_dtype
    if dtype not in (np.float32, np.float64):
        raise ValidationException(f"Unsupported precision: {dtype}")
    _default_dtype = dtype


@contextmanager
def precision(dtype: type) -> Iterator[None]:
    """Temporarily switch the default dtype."""
    previous = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


@dataclass
class GraphNode:
    """Backward-graph record of the op that produced a tensor."""
    op: str
    parents: Tuple['Tensor', ...]
    backward: BackwardFn


class Tensor:
    """N-dimensional array with an optional gradient and backward-graph record."""

    def __init__(self, values, requires_grad: bool = False, dtype: Optional[type] = None,
                 node: Optional[GraphNode] = None):
        self.values = np.ascontiguousarray(values, dtype=_default_dtype if dtype is None else dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad or node is not None
        self.node = node

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def numpy(self) -> np.ndarray:
        """The underlying array (not a copy)."""
        return self.values

    def item(self) -> float:
        """Scalar value of a one-element tensor."""
        return float(self.values.reshape(-1)[0])

    def _topological_order(self) -> List['Tensor']:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            if tensor.node is not None:
                for parent in reversed(tensor.node.parents):
                    if id(parent) not in visited:
                        stack.append((parent, False))
        return order

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """
        Accumulate d(self)/d(leaf) into `.grad` of every tensor requiring gradients.

        Args:
            grad: Upstream gradient; defaults to ones (scalar losses)
        """
        if grad is None:
            grad = np.ones_like(self.values)
        grads = {id(self): np.asarray(grad, dtype=self.values.dtype)}
        for tensor in reversed(self._topological_order()):
            upstream = grads.pop(id(tensor), None)
            if upstream is None:
                continue
            if tensor.node is None:
                if tensor.requires_grad:
                    tensor.grad = upstream if tensor.grad is None else tensor.grad + upstream
                continue
            parent_grads = tensor.node.backward(upstream)
            for parent, parent_grad in zip(tensor.node.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad

    def __repr__(self) -> str:
        op = self.node.op if self.node else "leaf"
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={op})"


@dataclass
class Parameter:
    """A named trainable tensor with its momentum buffer."""
    name: str
    tensor: Tensor
    trainable: bool = True
    velocity: np.ndarray = field(default=None)

    def __post_init__(self):
        self.tensor.requires_grad = True
        if self.velocity is None:
            self.velocity = np.zeros_like(self.tensor.values)
        if self.velocity.shape != self.tensor.shape:
            raise ValidationException(
                f"Velocity shape {self.velocity.shape} != parameter shape {self.tensor.shape}"
            )

    @property
    def values(self) -> np.ndarray:
        return self.tensor.values

    @property
    def size(self) -> int:
        return int(self.tensor.values.size)
