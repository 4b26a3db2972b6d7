#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Reverse-mode automatic differentiation.

A [`Tensor`][mmtrack.nets.tensor.Tensor] wraps a float64 array and remembers
the operation that produced it. Calling `backward()` on a scalar result
accumulates d(result)/d(leaf) into the `grad` of every leaf created with
`requires_grad=True`. Operations broadcast like numpy; gradients are summed
back to the operand shapes.
"""

import numpy
import scipy.special

from mmtrack.types import Array, Callable, Optional, Sequence, Union

from . import NetsError


class ShapeError(NetsError, ValueError):
    """Operand shapes are incompatible"""


def unbroadcast(grad: Array, shape: tuple) -> Array:
    """Sum a broadcast gradient back to the operand shape"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _is_basic(index) -> bool:
    """Index made of integers, slices and ellipsis only (no repeated elements)"""
    items = index if isinstance(index, tuple) else (index,)
    return all(item is Ellipsis or item is None or isinstance(item, (int, slice)) for item in items)


def as_tensor(value) -> "Tensor":
    return value if isinstance(value, Tensor) else Tensor(value)


class Tensor:
    """
    Array node of a differentiation graph

    Args:
        data: values (converted to float64)
        requires_grad: leaf whose gradient is wanted
        name: optional label (parameter name)
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = numpy.array(data, dtype=numpy.float64)
        self.grad: Optional[Array] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Tensor{label} shape={self.shape}>"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> Array:
        return self.data

    def item(self) -> float:
        return float(self.data)

    @classmethod
    def _result(cls, data: Array, parents: Sequence["Tensor"], backward: Callable) -> "Tensor":
        out = cls(data)
        if any(parent.requires_grad for parent in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _accumulate(self, grad: Array):
        if not self.requires_grad:
            return
        grad = unbroadcast(grad, self.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    def zero_grad(self):
        self.grad = None

    def backward(self, grad: Optional[Array] = None):
        """Accumulate gradients of this tensor into the leaves of its graph"""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward of a non scalar {self.shape} needs an explicit gradient")
            grad = numpy.ones_like(self.data)
        order, seen = [], set()

        def visit(node):
            stack = [(node, False)]
            while stack:
                current, expanded = stack.pop()
                if expanded:
                    order.append(current)
                    continue
                if id(current) in seen:
                    continue
                seen.add(id(current))
                stack.append((current, True))
                stack.extend((parent, False) for parent in current._parents)

        visit(self)
        grads = {id(self): numpy.asarray(grad, dtype=numpy.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, parent_grad in zip(node._parents, node._backward(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                parent_grad = unbroadcast(parent_grad, parent.shape)
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + parent_grad
                else:
                    grads[id(parent)] = parent_grad

    # arithmetic

    def __add__(self, other):
        other = as_tensor(other)
        return Tensor._result(self.data + other.data, (self, other), lambda g: (g, g))

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        return Tensor._result(self.data - other.data, (self, other), lambda g: (g, -g))

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __neg__(self):
        return Tensor._result(-self.data, (self,), lambda g: (-g,))

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor._result(a * b, (self, other), lambda g: (g * b, g * a))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor._result(a / b, (self, other), lambda g: (g / b, -g * a / (b * b)))

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeError(f"matmul needs operands of at least 2 dimensions (got {a.shape} @ {b.shape})")
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

        def backward(g):
            return g @ numpy.swapaxes(b, -1, -2), numpy.swapaxes(a, -1, -2) @ g

        return Tensor._result(a @ b, (self, other), backward)

    # shape

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        try:
            data = self.data.reshape(shape)
        except ValueError:
            raise ShapeError(f"cannot reshape {original} into {shape}") from None
        return Tensor._result(data, (self,), lambda g: (g.reshape(original),))

    def swapaxes(self, axis1: int, axis2: int):
        data = numpy.swapaxes(self.data, axis1, axis2)
        return Tensor._result(data, (self,), lambda g: (numpy.swapaxes(g, axis1, axis2),))

    @property
    def mT(self):
        """Transpose of the last two axes"""
        return self.swapaxes(-1, -2)

    def __getitem__(self, index):
        shape = self.shape

        def backward(g):
            grad = numpy.zeros(shape)
            if _is_basic(index):
                grad[index] += g
            else:
                numpy.add.at(grad, index, g)
            return (grad,)

        return Tensor._result(self.data[index], (self,), backward)

    # reductions

    def sum(self, axis=None, keepdims: bool = False):
        shape = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = numpy.expand_dims(g, axis)
            return (numpy.broadcast_to(g, shape),)

        return Tensor._result(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        count = self.data.size if axis is None else numpy.prod([self.shape[a] for a in numpy.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # element wise

    def exp(self):
        y = numpy.exp(self.data)
        return Tensor._result(y, (self,), lambda g: (g * y,))

    def silu(self):
        x = self.data
        s = scipy.special.expit(x)
        return Tensor._result(x * s, (self,), lambda g: (g * (s + x * s * (1 - s)),))

    def softmax(self, axis: int = -1):
        x = self.data
        e = numpy.exp(x - x.max(axis=axis, keepdims=True))
        y = e / e.sum(axis=axis, keepdims=True)
        return Tensor._result(y, (self,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))

    def layer_norm(self, eps: float = 1e-5):
        """(x - mean)/sqrt(var + eps) over the last axis"""
        x = self.data
        centered = x - x.mean(axis=-1, keepdims=True)
        inv_std = 1 / numpy.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
        y = centered * inv_std

        def backward(g):
            mean_g = g.mean(axis=-1, keepdims=True)
            mean_gy = (g * y).mean(axis=-1, keepdims=True)
            return (inv_std * (g - mean_g - y * mean_gy),)

        return Tensor._result(y, (self,), backward)


def concat(tensors: Sequence[Union[Tensor, Array]], axis: int = -1) -> Tensor:
    """Concatenate along an axis (operands broadcast on the other axes are not supported)"""
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = numpy.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as error:
        raise ShapeError(f"cannot concatenate: {error}") from None
    bounds = numpy.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(numpy.split(g, bounds, axis=axis))

    return Tensor._result(data, tensors, backward)


def mse(prediction: Tensor, target) -> Tensor:
    diff = prediction - as_tensor(target)
    return (diff * diff).mean()
