# This file is part of ts_vzen.
#
# Developed for the Vera C. Rubin Observatory Telescope and Site Systems.
# This product includes software developed by the LSST Project
# (https://www.lsst.org).
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.

"""Minimal tensor library with reverse-mode automatic differentiation.

A `Tensor` wraps a numpy array. Every differentiable operation is a
`Function` subclass; applying it records the function on the output tensor
so that `Tensor.backward` can walk the graph in reverse topological order.
All operation outputs are checked for NaN and infinite values and a
`NumericError` naming the operation is raised when one is found.
"""

__all__ = [
    "Tensor",
    "Function",
    "no_grad",
    "is_grad_enabled",
    "as_tensor",
    "parameter",
    "concat",
    "stack",
    "where",
    "maximum",
    "minimum",
    "masked_fill",
]

import contextlib
import threading
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import ContractError, NumericError, ShapeError

_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    """Return True if operations in this thread record the graph."""
    return getattr(_grad_mode, "enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording in the calling thread."""
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


def _check_finite(array: np.ndarray, op_name: str) -> None:
    if not np.all(np.isfinite(array)):
        raise NumericError(f"{op_name} produced non-finite values")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """N-dimensional array with an optional gradient.

    Parameters
    ----------
    data : array_like
        Values. Integer and boolean input is converted to float64.
    requires_grad : `bool`, optional
        Accumulate a gradient for this tensor during `backward`.
    dtype : `numpy.dtype`, optional
        Floating point type to store; defaults to the input's float type or
        float64.

    Raises
    ------
    NumericError
        If ``data`` contains NaN or infinite values.
    """

    # Make numpy scalars defer to Tensor operators.
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None, _ctx=None):
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype.kind == "f":
                dtype = data.dtype
            else:
                dtype = np.float64
        self.data = np.asarray(data, dtype=dtype)
        if _ctx is None:
            _check_finite(self.data, "Tensor")
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._ctx = _ctx

    @property
    def shape(self) -> tuple:
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

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item requires a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Back-propagate from this scalar through the recorded graph.

        Gradients of leaf tensors that require them are accumulated
        additively, both across uses in one graph and across calls.

        Raises
        ------
        ContractError
            If this tensor is not a scalar.
        """
        if self.size != 1:
            raise ContractError(f"backward requires a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(_topological_order(self)):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node._ctx is None:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            parent_grads = node._ctx.backward(grad)
            for parent, parent_grad in zip(node._ctx.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad

    # Arithmetic.
    def __add__(self, other):
        return Add.apply(self, other)

    def __radd__(self, other):
        return Add.apply(other, self)

    def __sub__(self, other):
        return Sub.apply(self, other)

    def __rsub__(self, other):
        return Sub.apply(other, self)

    def __mul__(self, other):
        return Mul.apply(self, other)

    def __rmul__(self, other):
        return Mul.apply(other, self)

    def __truediv__(self, other):
        return Div.apply(self, other)

    def __rtruediv__(self, other):
        return Div.apply(other, self)

    def __neg__(self):
        return Neg.apply(self)

    def __pow__(self, exponent: float):
        return Pow.apply(self, exponent=float(exponent))

    def __matmul__(self, other):
        return MatMul.apply(self, other)

    def __getitem__(self, index):
        return GetItem.apply(self, index=index)

    # Reductions and shape.
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return Mean.apply(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        return Transpose.apply(self, axes=axes)

    def swapaxes(self, axis1: int, axis2: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[axis1], axes[axis2] = axes[axis2], axes[axis1]
        return Transpose.apply(self, axes=tuple(axes))

    # Elementwise functions.
    def exp(self) -> "Tensor":
        return Exp.apply(self)

    def log(self) -> "Tensor":
        return Log.apply(self)

    def sqrt(self) -> "Tensor":
        return Sqrt.apply(self)

    def tanh(self) -> "Tensor":
        return Tanh.apply(self)

    def sigmoid(self) -> "Tensor":
        return Sigmoid.apply(self)

    def abs(self) -> "Tensor":
        return Abs.apply(self)

    def relu(self) -> "Tensor":
        return Relu.apply(self)


def _topological_order(root: Tensor) -> list:
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node._ctx is not None:
            for parent in node._ctx.parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def as_tensor(value, dtype=None) -> Tensor:
    """Return ``value`` as a constant `Tensor` unless it already is one."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


def parameter(data: np.ndarray) -> Tensor:
    """Return a trainable leaf tensor holding ``data``."""
    return Tensor(data, requires_grad=True)


class Function:
    """Differentiable operation.

    Subclasses implement ``forward`` on numpy arrays and ``backward``
    returning one gradient (or None) per tensor argument.
    """

    def __init__(self, parents: Sequence[Tensor]):
        self.parents = tuple(parents)

    @classmethod
    def apply(cls, *args, **kwargs) -> Tensor:
        dtype = next((a.dtype for a in args if isinstance(a, Tensor)), np.float64)
        parents = [as_tensor(a, dtype=dtype) for a in args]
        fn = cls(parents)
        out = fn.forward(*[p.data for p in parents], **kwargs)
        _check_finite(out, cls.__name__)
        requires_grad = is_grad_enabled() and any(p.requires_grad for p in parents)
        return Tensor(
            out, requires_grad=requires_grad, dtype=out.dtype, _ctx=fn if requires_grad else None
        )

    def forward(self, *arrays, **kwargs) -> np.ndarray:
        raise NotImplementedError()

    def backward(self, grad: np.ndarray) -> tuple:
        raise NotImplementedError()


class Add(Function):
    def forward(self, a, b):
        self.shapes = a.shape, b.shape
        return a + b

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a, b):
        self.shapes = a.shape, b.shape
        return a - b

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return (
            _unbroadcast(grad * self.b, self.a.shape),
            _unbroadcast(grad * self.a, self.b.shape),
        )


class Div(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        grad_a = grad / self.b
        grad_b = -grad * self.a / (self.b * self.b)
        return _unbroadcast(grad_a, self.a.shape), _unbroadcast(grad_b, self.b.shape)


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Pow(Function):
    def forward(self, a, exponent):
        self.a, self.exponent = a, exponent
        return a**exponent

    def backward(self, grad):
        return (grad * self.exponent * self.a ** (self.exponent - 1),)


class MatMul(Function):
    """Matrix product over the last two axes, batched over leading axes."""

    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
        self.a, self.b = a, b
        return np.matmul(a, b)

    def backward(self, grad):
        grad_a = np.matmul(grad, np.swapaxes(self.b, -1, -2))
        grad_b = np.matmul(np.swapaxes(self.a, -1, -2), grad)
        return _unbroadcast(grad_a, self.a.shape), _unbroadcast(grad_b, self.b.shape)


class Exp(Function):
    def forward(self, a):
        self.out = np.exp(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, a):
        self.a = a
        return np.log(a)

    def backward(self, grad):
        return (grad / self.a,)


class Sqrt(Function):
    def forward(self, a):
        self.out = np.sqrt(a)
        return self.out

    def backward(self, grad):
        return (grad * 0.5 / self.out,)


class Tanh(Function):
    def forward(self, a):
        self.out = np.tanh(a)
        return self.out

    def backward(self, grad):
        return (grad * (1.0 - self.out * self.out),)


class Sigmoid(Function):
    def forward(self, a):
        # Split on sign so neither branch overflows.
        positive = a >= 0
        exp_neg = np.exp(-np.abs(a))
        self.out = np.where(positive, 1.0 / (1.0 + exp_neg), exp_neg / (1.0 + exp_neg))
        self.out = self.out.astype(a.dtype, copy=False)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Abs(Function):
    def forward(self, a):
        self.sign = np.sign(a)
        return np.abs(a)

    def backward(self, grad):
        return (grad * self.sign,)


class Relu(Function):
    def forward(self, a):
        self.positive = a > 0
        return np.where(self.positive, a, 0).astype(a.dtype, copy=False)

    def backward(self, grad):
        return (grad * self.positive,)


class Maximum(Function):
    def forward(self, a, b):
        self.shapes = a.shape, b.shape
        self.pick_a = a >= b
        return np.maximum(a, b)

    def backward(self, grad):
        return (
            _unbroadcast(grad * self.pick_a, self.shapes[0]),
            _unbroadcast(grad * ~self.pick_a, self.shapes[1]),
        )


class Minimum(Function):
    def forward(self, a, b):
        self.shapes = a.shape, b.shape
        self.pick_a = a <= b
        return np.minimum(a, b)

    def backward(self, grad):
        return (
            _unbroadcast(grad * self.pick_a, self.shapes[0]),
            _unbroadcast(grad * ~self.pick_a, self.shapes[1]),
        )


class Sum(Function):
    def forward(self, a, axis, keepdims):
        self.shape, self.axis, self.keepdims = a.shape, axis, keepdims
        return np.asarray(np.sum(a, axis=axis, keepdims=keepdims))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


class Mean(Function):
    def forward(self, a, axis, keepdims):
        self.shape, self.axis, self.keepdims = a.shape, axis, keepdims
        out = np.asarray(np.mean(a, axis=axis, keepdims=keepdims))
        self.count = a.size // max(out.size, 1) if a.size else 1
        return out

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad / self.count, self.shape).copy(),)


class Reshape(Function):
    def forward(self, a, shape):
        self.shape = a.shape
        try:
            return a.reshape(shape)
        except ValueError as e:
            raise ShapeError(f"reshape: cannot reshape {a.shape} to {shape}") from e

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class Transpose(Function):
    def forward(self, a, axes):
        self.axes = axes
        return np.transpose(a, axes)

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)


class GetItem(Function):
    """Basic or integer-array indexing; repeated indices accumulate."""

    def forward(self, a, index):
        self.shape, self.index, self.dtype = a.shape, index, a.dtype
        return np.array(a[index], dtype=a.dtype, copy=True)

    def backward(self, grad):
        full = np.zeros(self.shape, dtype=self.dtype)
        np.add.at(full, self.index, grad)
        return (full,)


class Concat(Function):
    def forward(self, *arrays, axis):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        try:
            return np.concatenate(arrays, axis=axis)
        except ValueError as e:
            shapes = [a.shape for a in arrays]
            raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}") from e

    def backward(self, grad):
        splits = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, splits, axis=self.axis))


class Stack(Function):
    def forward(self, *arrays, axis):
        self.axis = axis
        return np.stack(arrays, axis=axis)

    def backward(self, grad):
        return tuple(np.moveaxis(grad, self.axis, 0))


class Where(Function):
    def forward(self, a, b, condition):
        self.shapes = a.shape, b.shape
        self.condition = condition
        return np.where(condition, a, b)

    def backward(self, grad):
        return (
            _unbroadcast(np.where(self.condition, grad, 0), self.shapes[0]),
            _unbroadcast(np.where(self.condition, 0, grad), self.shapes[1]),
        )


class MaskedFill(Function):
    def forward(self, a, mask, value):
        self.mask = mask
        return np.where(mask, np.asarray(value, dtype=a.dtype), a)

    def backward(self, grad):
        return (np.where(self.mask, 0, grad),)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate tensors along an existing axis."""
    return Concat.apply(*tensors, axis=axis)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Stack tensors along a new axis."""
    return Stack.apply(*tensors, axis=axis)


def where(condition: np.ndarray, a, b) -> Tensor:
    """Select from ``a`` where ``condition`` holds, else from ``b``."""
    return Where.apply(a, b, condition=np.asarray(condition, dtype=bool))


def maximum(a, b) -> Tensor:
    return Maximum.apply(a, b)


def minimum(a, b) -> Tensor:
    return Minimum.apply(a, b)


def masked_fill(a: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries of ``a`` where ``mask`` is True by ``value``."""
    return MaskedFill.apply(a, mask=np.asarray(mask, dtype=bool), value=value)
