"""Reverse-mode autodiff over numpy arrays.

A ``Tensor`` wraps a float32 ndarray and records the operations applied to
it; ``backward()`` walks the recorded graph in reverse topological order and
accumulates gradients into every tensor with ``requires_grad``. Only the
operations the shape models need are implemented (this is not a general
autodiff engine). All data is float32 by default; operations preserve the
dtype of their inputs so the gradient checker can rerun a graph in float64.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Iterable, Sequence

import numpy as np

from ..errors import DimensionError

Array = np.ndarray

DEFAULT_DTYPE = np.float32

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation paths)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def _as_array(value, dtype=None) -> Array:
    arr = np.asarray(value)
    if arr.dtype.kind != "f":
        arr = arr.astype(DEFAULT_DTYPE)
    if dtype is not None and arr.dtype != dtype:
        arr = arr.astype(dtype)
    return arr


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``grad`` down to ``shape`` (the inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the computation graph.

    ``data`` is the forward value, ``grad`` the accumulated gradient (same
    shape, allocated on demand). Tensors built from operations keep
    references to their parents plus a closure that propagates gradients.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data: Array = _as_array(data)
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @classmethod
    def _from_op(cls, data: Array, parents: Sequence["Tensor"], backward) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    def _accumulate(self, grad: Array) -> None:
        if self.grad is None:
            self.grad = grad.astype(self.data.dtype, copy=True)
        else:
            self.grad += grad

    # -- properties ------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- backward --------------------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from this scalar through the recorded graph."""
        if self.data.size != 1:
            raise DimensionError(
                f"backward() requires a scalar, got shape {self.shape}"
            )
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited and p.requires_grad:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ------------------------------------------------------------

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(_as_array(other, dtype=self.data.dtype))

    def __add__(self, other):
        other = self._coerce(other)
        a, b = self, other
        out = Tensor._from_op(a.data + b.data, (a, b), None)
        if out.requires_grad:
            def backward(grad):
                if a.requires_grad:
                    a._accumulate(_unbroadcast(grad, a.shape))
                if b.requires_grad:
                    b._accumulate(_unbroadcast(grad, b.shape))
            out._backward = backward
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor._from_op(-self.data, (self,), None)
        if out.requires_grad:
            out._backward = lambda grad: self._accumulate(-grad)
        return out

    def __sub__(self, other):
        other = self._coerce(other)
        a, b = self, other
        out = Tensor._from_op(a.data - b.data, (a, b), None)
        if out.requires_grad:
            def backward(grad):
                if a.requires_grad:
                    a._accumulate(_unbroadcast(grad, a.shape))
                if b.requires_grad:
                    b._accumulate(_unbroadcast(-grad, b.shape))
            out._backward = backward
        return out

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __mul__(self, other):
        other = self._coerce(other)
        a, b = self, other
        out = Tensor._from_op(a.data * b.data, (a, b), None)
        if out.requires_grad:
            def backward(grad):
                if a.requires_grad:
                    a._accumulate(_unbroadcast(grad * b.data, a.shape))
                if b.requires_grad:
                    b._accumulate(_unbroadcast(grad * a.data, b.shape))
            out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        a, b = self, other
        out = Tensor._from_op(a.data / b.data, (a, b), None)
        if out.requires_grad:
            def backward(grad):
                if a.requires_grad:
                    a._accumulate(_unbroadcast(grad / b.data, a.shape))
                if b.requires_grad:
                    b._accumulate(
                        _unbroadcast(-grad * a.data / (b.data * b.data), b.shape)
                    )
            out._backward = backward
        return out

    def __pow__(self, exponent: float):
        p = float(exponent)
        out = Tensor._from_op(self.data ** p, (self,), None)
        if out.requires_grad:
            def backward(grad):
                self._accumulate(grad * p * self.data ** (p - 1.0))
            out._backward = backward
        return out

    def __matmul__(self, other):
        other = self._coerce(other)
        a, b = self, other
        out = Tensor._from_op(a.data @ b.data, (a, b), None)
        if out.requires_grad:
            def backward(grad):
                if a.requires_grad:
                    ga = grad @ np.swapaxes(b.data, -1, -2)
                    a._accumulate(_unbroadcast(ga, a.shape))
                if b.requires_grad:
                    gb = np.swapaxes(a.data, -1, -2) @ grad
                    b._accumulate(_unbroadcast(gb, b.shape))
            out._backward = backward
        return out

    # -- shape ops ---------------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        out = Tensor._from_op(self.data.reshape(shape), (self,), None)
        if out.requires_grad:
            out._backward = lambda grad: self._accumulate(grad.reshape(old))
        return out

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inverse = np.argsort(axes)
        out = Tensor._from_op(
            np.ascontiguousarray(self.data.transpose(axes)), (self,), None
        )
        if out.requires_grad:
            out._backward = lambda grad: self._accumulate(grad.transpose(inverse))
        return out

    def __getitem__(self, index) -> "Tensor":
        out = Tensor._from_op(np.ascontiguousarray(self.data[index]), (self,), None)
        if out.requires_grad:
            # Integer-array indices may repeat, so they need scatter-add;
            # pure slice indexing cannot alias and takes the fast path.
            parts = index if isinstance(index, tuple) else (index,)
            has_array = any(isinstance(p, (np.ndarray, list)) for p in parts)

            def backward(grad):
                full = np.zeros_like(self.data)
                if has_array:
                    np.add.at(full, index, grad)
                else:
                    full[index] += grad
                self._accumulate(full)
            out._backward = backward
        return out

    # -- reductions ---------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out = Tensor._from_op(self.data.sum(axis=axis, keepdims=keepdims), (self,), None)
        if out.requires_grad:
            shape = self.shape

            def backward(grad):
                g = grad
                if axis is not None and not keepdims:
                    axes = (axis,) if isinstance(axis, int) else tuple(axis)
                    axes = tuple(a % len(shape) for a in axes)
                    g = np.expand_dims(g, axes)
                self._accumulate(np.broadcast_to(g, shape).astype(self.data.dtype))
            out._backward = backward
        return out

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- elementwise -----------------------------------------------------------

    def exp(self) -> "Tensor":
        value = np.exp(self.data)
        out = Tensor._from_op(value, (self,), None)
        if out.requires_grad:
            out._backward = lambda grad: self._accumulate(grad * value)
        return out

    def log(self) -> "Tensor":
        out = Tensor._from_op(np.log(self.data), (self,), None)
        if out.requires_grad:
            out._backward = lambda grad: self._accumulate(grad / self.data)
        return out

    def tanh(self) -> "Tensor":
        value = np.tanh(self.data)
        out = Tensor._from_op(value, (self,), None)
        if out.requires_grad:
            out._backward = lambda grad: self._accumulate(grad * (1.0 - value * value))
        return out

    def sigmoid(self) -> "Tensor":
        value = _sigmoid(self.data)
        out = Tensor._from_op(value, (self,), None)
        if out.requires_grad:
            out._backward = lambda grad: self._accumulate(grad * value * (1.0 - value))
        return out

    def sqrt(self) -> "Tensor":
        value = np.sqrt(self.data)
        out = Tensor._from_op(value, (self,), None)
        if out.requires_grad:
            out._backward = lambda grad: self._accumulate(grad * 0.5 / value)
        return out

    def abs(self) -> "Tensor":
        out = Tensor._from_op(np.abs(self.data), (self,), None)
        if out.requires_grad:
            out._backward = lambda grad: self._accumulate(grad * np.sign(self.data))
        return out


try:
    from scipy.special import expit as _sigmoid  # single-pass C ufunc
except ImportError:  # pragma: no cover - scipy is a hard dependency in practice
    def _sigmoid(x: Array) -> Array:
        z = np.exp(-np.abs(x))
        denom = 1.0 + z
        return np.where(x >= 0, 1.0 / denom, z / denom)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate tensors along ``axis`` with gradient routing via slices."""
    datas = [t.data for t in tensors]
    out = Tensor._from_op(np.concatenate(datas, axis=axis), tuple(tensors), None)
    if out.requires_grad:
        sizes = [d.shape[axis] for d in datas]
        offsets = np.cumsum([0] + sizes)

        def backward(grad):
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    index = [slice(None)] * grad.ndim
                    index[axis] = slice(int(lo), int(hi))
                    t._accumulate(grad[tuple(index)])
        out._backward = backward
    return out


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    datas = [t.data for t in tensors]
    out = Tensor._from_op(np.stack(datas, axis=axis), tuple(tensors), None)
    if out.requires_grad:
        def backward(grad):
            pieces = np.moveaxis(grad, axis, 0)
            for t, g in zip(tensors, pieces):
                if t.requires_grad:
                    t._accumulate(g)
        out._backward = backward
    return out


class Parameter(Tensor):
    """A learnable tensor with a unique name and an always-allocated gradient."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def zero_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()
