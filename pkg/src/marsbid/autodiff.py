"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Just enough graph machinery for a small actor-critic: elementwise
arithmetic, matmul, tanh/exp/log, reductions, elementwise min and clip.
Build a graph by wrapping inputs in :class:`Node`, combine with operators,
then call :func:`backward` on a scalar result; every node's ``grad`` is the
exact derivative of that scalar with respect to the node's value.

Broadcasting follows numpy; gradients are summed back over broadcast axes.
"""

from __future__ import annotations

import numpy as np


class Node:
    __slots__ = ("value", "grad", "_parents", "_grad_fns")

    def __init__(self, value, parents=(), grad_fns=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._grad_fns = grad_fns

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def shape(self):
        return self.value.shape


def as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` back down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    out = Node(
        a.value + b.value,
        parents=(a, b),
        grad_fns=(
            lambda g: _unbroadcast(g, a.value.shape),
            lambda g: _unbroadcast(g, b.value.shape),
        ),
    )
    return out


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(
        a.value - b.value,
        parents=(a, b),
        grad_fns=(
            lambda g: _unbroadcast(g, a.value.shape),
            lambda g: _unbroadcast(-g, b.value.shape),
        ),
    )


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(
        a.value * b.value,
        parents=(a, b),
        grad_fns=(
            lambda g: _unbroadcast(g * b.value, a.value.shape),
            lambda g: _unbroadcast(g * a.value, b.value.shape),
        ),
    )


def div(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(
        a.value / b.value,
        parents=(a, b),
        grad_fns=(
            lambda g: _unbroadcast(g / b.value, a.value.shape),
            lambda g: _unbroadcast(-g * a.value / (b.value**2), b.value.shape),
        ),
    )


def matmul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(
        a.value @ b.value,
        parents=(a, b),
        grad_fns=(lambda g: g @ b.value.T, lambda g: a.value.T @ g),
    )


def tanh(a) -> Node:
    a = as_node(a)
    t = np.tanh(a.value)
    return Node(t, parents=(a,), grad_fns=(lambda g: g * (1.0 - t * t),))


def exp(a) -> Node:
    a = as_node(a)
    e = np.exp(a.value)
    return Node(e, parents=(a,), grad_fns=(lambda g: g * e,))


def log(a) -> Node:
    a = as_node(a)
    return Node(np.log(a.value), parents=(a,), grad_fns=(lambda g: g / a.value,))


def square(a) -> Node:
    a = as_node(a)
    return Node(a.value**2, parents=(a,), grad_fns=(lambda g: g * 2.0 * a.value,))


def nsum(a, axis=None) -> Node:
    a = as_node(a)

    def grad_fn(g):
        if axis is None:
            return np.broadcast_to(g, a.value.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), a.value.shape).copy()

    return Node(a.value.sum(axis=axis), parents=(a,), grad_fns=(grad_fn,))


def nmean(a, axis=None) -> Node:
    a = as_node(a)
    count = a.value.size if axis is None else a.value.shape[axis]

    def grad_fn(g):
        if axis is None:
            return np.broadcast_to(g / count, a.value.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis) / count, a.value.shape).copy()

    return Node(a.value.mean(axis=axis), parents=(a,), grad_fns=(grad_fn,))


def minimum(a, b) -> Node:
    """Elementwise min; at a tie the gradient flows to the first argument."""
    a, b = as_node(a), as_node(b)
    take_a = a.value <= b.value
    return Node(
        np.minimum(a.value, b.value),
        parents=(a, b),
        grad_fns=(
            lambda g: _unbroadcast(g * take_a, a.value.shape),
            lambda g: _unbroadcast(g * ~take_a, b.value.shape),
        ),
    )


def clip(a, lo: float, hi: float) -> Node:
    """Clamp to [lo, hi]; gradient passes through only strictly inside."""
    a = as_node(a)
    inside = (a.value > lo) & (a.value < hi)
    return Node(
        np.clip(a.value, lo, hi),
        parents=(a,),
        grad_fns=(lambda g: g * inside,),
    )


def backward(root: Node) -> None:
    """Accumulate gradients of the scalar ``root`` into every node it
    depends on. Resets grads reachable from ``root`` first."""
    if root.value.size != 1:
        raise ValueError("backward requires a scalar root")

    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    for node in order:
        node.grad = np.zeros_like(node.value)
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if not node._parents:
            continue
        g = node.grad
        for parent, fn in zip(node._parents, node._grad_fns):
            parent.grad = parent.grad + fn(g)


def grad_of(node: Node) -> np.ndarray:
    """Gradient accumulated by the last backward pass; a node the loss never
    touched has an exactly-zero gradient."""
    return node.grad if node.grad is not None else np.zeros_like(node.value)
