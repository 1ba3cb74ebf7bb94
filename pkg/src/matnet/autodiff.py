"""Minimal reverse-mode differentiation over numpy arrays.

The forward pass of the stiffness homogenizer is built from a small,
closed set of primitives: elementwise add/multiply/divide, matrix
multiply, transpose, batched matrix inverse, softplus, sin/cos, slicing,
reshape and sums. Each primitive records its adjoint on a tape (the
graph of `Var` nodes); `backward` replays the tape in reverse.

Every helper below accepts either a `Var` or a plain ndarray and returns
the matching kind, so model code can be written once and evaluated with
or without gradient tracking.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Var", "backward", "sin", "cos", "softplus", "matmul", "transpose",
    "inv", "asum", "reshape", "value_of",
]


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Var:
    """A node in the differentiation tape wrapping an ndarray value."""

    __slots__ = ("value", "grad", "_parents", "_backward")

    # keep numpy from absorbing Var operands into object arrays; binary
    # ops with ndarrays then fall back to the reflected operators below
    __array_ufunc__ = None

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(other, mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        val = self.value[idx]

        def bwd(g, self=self, idx=idx, shape=self.value.shape):
            full = np.zeros(shape)
            full[idx] += g
            self._accumulate(full)

        return Var(val, (self,), bwd)

    def __repr__(self):
        return f"Var({self.value!r})"


def value_of(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def _is_var(*xs):
    return any(isinstance(x, Var) for x in xs)


def add(a, b):
    if not _is_var(a, b):
        return np.add(a, b)
    av, bv = value_of(a), value_of(b)
    out_val = av + bv
    parents = tuple(x for x in (a, b) if isinstance(x, Var))

    def bwd(g):
        if isinstance(a, Var):
            a._accumulate(_unbroadcast(g, av.shape))
        if isinstance(b, Var):
            b._accumulate(_unbroadcast(g, bv.shape))

    return Var(out_val, parents, bwd)


def mul(a, b):
    if not _is_var(a, b):
        return np.multiply(a, b)
    av, bv = value_of(a), value_of(b)
    out_val = av * bv
    parents = tuple(x for x in (a, b) if isinstance(x, Var))

    def bwd(g):
        if isinstance(a, Var):
            a._accumulate(_unbroadcast(g * bv, av.shape))
        if isinstance(b, Var):
            b._accumulate(_unbroadcast(g * av, bv.shape))

    return Var(out_val, parents, bwd)


def div(a, b):
    if not _is_var(a, b):
        return np.divide(a, b)
    av, bv = value_of(a), value_of(b)
    out_val = av / bv
    parents = tuple(x for x in (a, b) if isinstance(x, Var))

    def bwd(g):
        if isinstance(a, Var):
            a._accumulate(_unbroadcast(g / bv, av.shape))
        if isinstance(b, Var):
            b._accumulate(_unbroadcast(-g * av / (bv * bv), bv.shape))

    return Var(out_val, parents, bwd)


def _swap_last(x):
    return np.swapaxes(x, -1, -2)


def matmul(a, b):
    if not _is_var(a, b):
        return np.matmul(a, b)
    av, bv = value_of(a), value_of(b)
    out_val = av @ bv
    parents = tuple(x for x in (a, b) if isinstance(x, Var))

    def bwd(g):
        if isinstance(a, Var):
            ga = g @ _swap_last(bv)
            a._accumulate(_unbroadcast(ga, av.shape))
        if isinstance(b, Var):
            gb = _swap_last(av) @ g
            b._accumulate(_unbroadcast(gb, bv.shape))

    return Var(out_val, parents, bwd)


def transpose(x):
    """Swap the last two axes."""
    if not isinstance(x, Var):
        return np.swapaxes(x, -1, -2)

    def bwd(g, x=x):
        x._accumulate(_swap_last(g))

    return Var(_swap_last(x.value), (x,), bwd)


def inv(x):
    """Batched matrix inverse with adjoint -A^{-T} g A^{-T}."""
    if not isinstance(x, Var):
        return np.linalg.inv(x)
    inv_val = np.linalg.inv(x.value)

    def bwd(g, x=x, inv_val=inv_val):
        it = _swap_last(inv_val)
        x._accumulate(-(it @ g @ it))

    return Var(inv_val, (x,), bwd)


def sin(x):
    if not isinstance(x, Var):
        return np.sin(x)

    def bwd(g, x=x):
        x._accumulate(g * np.cos(x.value))

    return Var(np.sin(x.value), (x,), bwd)


def cos(x):
    if not isinstance(x, Var):
        return np.cos(x)

    def bwd(g, x=x):
        x._accumulate(-g * np.sin(x.value))

    return Var(np.cos(x.value), (x,), bwd)


def _softplus_val(z):
    # log(1 + e^z) without overflow for large |z|
    return np.logaddexp(0.0, z)


def softplus(x):
    if not isinstance(x, Var):
        return _softplus_val(np.asarray(x, dtype=float))
    val = _softplus_val(x.value)

    def bwd(g, x=x):
        # derivative is the logistic function
        x._accumulate(g / (1.0 + np.exp(-x.value)))

    return Var(val, (x,), bwd)


def asum(x, axis=None, keepdims=False):
    if not isinstance(x, Var):
        return np.sum(x, axis=axis, keepdims=keepdims)
    val = np.sum(x.value, axis=axis, keepdims=keepdims)

    def bwd(g, x=x, axis=axis, keepdims=keepdims):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x._accumulate(np.broadcast_to(g, x.value.shape).copy())

    return Var(val, (x,), bwd)


def reshape(x, shape):
    if not isinstance(x, Var):
        return np.reshape(x, shape)

    def bwd(g, x=x):
        x._accumulate(g.reshape(x.value.shape))

    return Var(x.value.reshape(shape), (x,), bwd)


def backward(out):
    """Accumulate gradients of a scalar `out` into every upstream Var."""
    if out.value.size != 1:
        raise ValueError("backward expects a scalar output")
    order = []
    seen = set()
    stack = [(out, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    out.grad = np.ones_like(out.value)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
