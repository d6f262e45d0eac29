"""Minimal reverse-mode automatic differentiation over numpy arrays.

This is the reference gradient path. Training uses the fused kernels in
``_kernels``; tests check the two against each other and against finite
differences.
"""
import numpy as np


class Var:
    __slots__ = ("value", "grad", "_parents", "_backward")

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad = self.grad + g

    def backward(self):
        if self.value.size != 1:
            raise ValueError("backward() needs a scalar output")
        order, seen = [], set()

        def visit(node):
            if id(node) in seen:
                return
            seen.add(id(node))
            for p in node._parents:
                visit(p)
            order.append(node)

        visit(self)
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # arithmetic ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, -1.0 * as_var(other))

    def __rsub__(self, other):
        return add(as_var(other), -1.0 * self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def as_var(x):
    return x if isinstance(x, Var) else Var(x)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    a, b = as_var(a), as_var(b)

    def back(g):
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(g, b.shape))

    return Var(a.value + b.value, (a, b), back)


def mul(a, b):
    a, b = as_var(a), as_var(b)

    def back(g):
        a._accum(_unbroadcast(g * b.value, a.shape))
        b._accum(_unbroadcast(g * a.value, b.shape))

    return Var(a.value * b.value, (a, b), back)


def matmul(a, b):
    a, b = as_var(a), as_var(b)

    def back(g):
        a._accum(g @ b.value.T)
        b._accum(a.value.T @ g)

    return Var(a.value @ b.value, (a, b), back)


def getitem(a, key):
    def back(g):
        full = np.zeros_like(a.value)
        full[key] = g
        a._accum(full)

    return Var(a.value[key], (a,), back)


def reshape(a, shape):
    def back(g):
        a._accum(g.reshape(a.shape))

    return Var(a.value.reshape(shape), (a,), back)


def relu(a):
    mask = a.value > 0.0

    def back(g):
        a._accum(g * mask)

    return Var(np.where(mask, a.value, 0.0), (a,), back)


def vsum(a):
    def back(g):
        a._accum(np.broadcast_to(g, a.shape).copy())

    return Var(a.value.sum(), (a,), back)


def mean(a):
    return mul(vsum(a), 1.0 / a.value.size)


def sumsq(a):
    def back(g):
        a._accum(2.0 * g * a.value)

    return Var((a.value * a.value).sum(), (a,), back)


def cross_entropy_rows(logits, labels):
    """Per-row ``-log softmax(logits)[label]`` for a ``(B, C)`` Var."""
    labels = np.asarray(labels, dtype=np.int64)
    z = logits.value
    mx = z.max(axis=1, keepdims=True)
    e = np.exp(z - mx)
    s = e.sum(axis=1, keepdims=True)
    rows = np.arange(z.shape[0])
    out = mx[:, 0] + np.log(s[:, 0]) - z[rows, labels]
    p = e / s

    def back(g):
        d = p.copy()
        d[rows, labels] -= 1.0
        logits._accum(d * g[:, None])

    return Var(out, (logits,), back)


def huber_rows(pred, target, delta):
    r = pred.value - np.asarray(target, dtype=np.float64)
    ar = np.abs(r)
    quad = ar <= delta
    out = np.where(quad, 0.5 * r * r, delta * (ar - 0.5 * delta))

    def back(g):
        pred._accum(g * np.where(quad, r, delta * np.sign(r)))

    return Var(out, (pred,), back)
