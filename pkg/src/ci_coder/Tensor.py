from __future__ import annotations

import typing as tp
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from contextvars import ContextVar

import numpy as np

from .exceptions import GraphError, NonFiniteError, ShapeMismatchError
from .Types import FloatArray

BackwardFn = Callable[[FloatArray], tp.Sequence[FloatArray | None]]
Operand = tp.Union["Tensor", FloatArray, float, int]

_grad_enabled: ContextVar[bool] = ContextVar("grad_enabled", default=True)


@contextmanager
def no_grad() -> Iterator[None]:
    """run forward passes without recording a graph"""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def _unbroadcast(grad: FloatArray, shape: tuple[int, ...]) -> FloatArray:
    """sum a broadcast gradient back to the shape of the operand it flows into"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """
    A float64 array with a gradient accumulator and the closure that
    propagates gradients to the tensors it was computed from.

    Leaves created with requires_grad=True collect gradients in `grad`;
    intermediate tensors only pass them on. The graph is released by
    `backward`, so a second call needs a new forward pass.
    """

    def __init__(
        self,
        data: Operand,
        requires_grad: bool = False,
        name: str = "",
        parents: tuple[Tensor, ...] = (),
        backward_fn: BackwardFn | None = None,
        op: str = "",
    ) -> None:
        array = np.array(data.data if isinstance(data, Tensor) else data, dtype=np.float64)
        if not np.isfinite(array).all():
            raise NonFiniteError(f"Non-finite values produced by {op or 'tensor construction'} {name}".rstrip())

        self.data: FloatArray = array
        self.grad: FloatArray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = op
        self._parents = parents
        self._backward_fn = backward_fn

    def __repr__(self) -> str:
        label = f" '{self.name}'" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, op={self.op or 'leaf'}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._backward_fn is None

    @property
    def T(self) -> Tensor:  # noqa: N802
        return transpose(self)

    def item(self) -> float:
        if self.size != 1:
            raise ShapeMismatchError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> FloatArray:
        return self.data.copy()

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: FloatArray) -> None:
        if grad.shape != self.data.shape:
            raise ShapeMismatchError(f"Gradient of shape {grad.shape} does not match tensor of shape {self.shape}")
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    def _topological_order(self) -> list[Tensor]:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            stack.extend((parent, False) for parent in node._parents if parent.requires_grad)
        return order

    def backward(self, grad: FloatArray | None = None) -> None:
        """reverse-mode pass accumulating d(self)/d(leaf) into every leaf that requires grad"""
        if self.is_leaf or not self.requires_grad:
            raise GraphError("backward() needs the output of a recorded forward pass")

        if grad is None:
            if self.size != 1:
                raise ShapeMismatchError(f"backward() without a seed gradient needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)

        grads: dict[int, FloatArray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(self._topological_order()):
            node_grad = grads.pop(id(node), None)
            if node_grad is None:
                continue
            if not np.isfinite(node_grad).all():
                raise NonFiniteError(f"Non-finite gradient flowing through {node!r}")

            if node.is_leaf:
                node._accumulate(node_grad)
                continue

            assert node._backward_fn is not None
            for parent, parent_grad in zip(node._parents, node._backward_fn(node_grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                parent_grad = _unbroadcast(parent_grad, parent.shape)
                key = id(parent)
                grads[key] = grads[key] + parent_grad if key in grads else parent_grad

            node._release()

    def _release(self) -> None:
        self._parents = ()
        self._backward_fn = None
        self.requires_grad = False

    def __add__(self, other: Operand) -> Tensor:
        return add(self, other)

    def __radd__(self, other: Operand) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Operand) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: Operand) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Operand) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: Operand) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other: float) -> Tensor:
        return mul(self, 1.0 / other)

    def __neg__(self) -> Tensor:
        return mul(self, -1.0)

    def __matmul__(self, other: Operand) -> Tensor:
        return matmul(self, other)

    def __rmatmul__(self, other: Operand) -> Tensor:
        return matmul(other, self)


def as_tensor(value: Operand) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def make_result(data: FloatArray, parents: tuple[Tensor, ...], backward_fn: BackwardFn, op: str) -> Tensor:
    """wrap an op output, recording the graph only when grad mode is on and a parent needs it"""
    if _grad_enabled.get() and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn, op=op)
    return Tensor(data, op=op)


def add(a: Operand, b: Operand) -> Tensor:
    a_, b_ = as_tensor(a), as_tensor(b)
    return make_result(a_.data + b_.data, (a_, b_), lambda g: (g, g), "add")


def sub(a: Operand, b: Operand) -> Tensor:
    a_, b_ = as_tensor(a), as_tensor(b)
    return make_result(a_.data - b_.data, (a_, b_), lambda g: (g, -g), "sub")


def mul(a: Operand, b: Operand) -> Tensor:
    a_, b_ = as_tensor(a), as_tensor(b)
    return make_result(a_.data * b_.data, (a_, b_), lambda g: (g * b_.data, g * a_.data), "mul")


def matmul(a: Operand, b: Operand) -> Tensor:
    a_, b_ = as_tensor(a), as_tensor(b)
    if a_.ndim != 2 or b_.ndim != 2 or a_.shape[1] != b_.shape[0]:
        raise ShapeMismatchError(f"Cannot multiply matrices of shapes {a_.shape} and {b_.shape}")
    return make_result(a_.data @ b_.data, (a_, b_), lambda g: (g @ b_.data.T, a_.data.T @ g), "matmul")


def transpose(a: Operand) -> Tensor:
    a_ = as_tensor(a)
    return make_result(a_.data.T.copy(), (a_,), lambda g: (g.T,), "transpose")


def relu(a: Operand) -> Tensor:
    a_ = as_tensor(a)
    active = a_.data > 0
    return make_result(np.where(active, a_.data, 0.0), (a_,), lambda g: (g * active,), "relu")


def tanh(a: Operand) -> Tensor:
    a_ = as_tensor(a)
    out = np.tanh(a_.data)
    return make_result(out, (a_,), lambda g: (g * (1.0 - out**2),), "tanh")


def sigmoid(a: Operand) -> Tensor:
    a_ = as_tensor(a)
    # exp(-|x|) never overflows
    e = np.exp(-np.abs(a_.data))
    out = np.where(a_.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return make_result(out, (a_,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def identity(a: Operand) -> Tensor:
    return as_tensor(a)


def tensor_sum(a: Operand, axis: int | None = None) -> Tensor:
    a_ = as_tensor(a)

    def backward(g: FloatArray) -> tuple[FloatArray]:
        expanded = g if axis is None else np.expand_dims(g, axis)
        return (np.broadcast_to(expanded, a_.shape).copy(),)

    return make_result(a_.data.sum(axis=axis), (a_,), backward, "sum")


def mean(a: Operand) -> Tensor:
    a_ = as_tensor(a)
    count = max(a_.size, 1)
    value = np.asarray(a_.data.sum() / count)
    return make_result(value, (a_,), lambda g: (np.full(a_.shape, g / count),), "mean")
