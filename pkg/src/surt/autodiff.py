"""Reverse-mode automatic differentiation over dense numpy arrays.

Tensors carry float32 values by default; a float64 mode exists for
finite-difference verification, where float32 forward noise would swamp
the difference quotient.
"""
from __future__ import annotations

import contextlib

import numpy as np

_DEFAULT_DTYPE = np.float32


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def use_dtype(dtype):
    """Temporarily switch the dtype used for newly created tensors."""
    global _DEFAULT_DTYPE
    prev = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = prev


class Tensor:
    """A node in the compute graph: a value, an optional gradient, and a
    closure that pushes the output gradient back to the parents."""

    __slots__ = ("data", "grad", "_parents", "_backward", "requires_grad", "name")

    def __init__(self, data, parents=(), backward=None, requires_grad=False, name=None):
        if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            self.data = data
        else:
            self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.grad = None
        self._parents = tuple(parents)
        self._backward = backward
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse traversal from this (scalar) node; each node visited once."""
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.shape}")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operators -----------------------------------------------------

    def __add__(self, other):
        return add(self, _lift(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(other, self))

    def __rsub__(self, other):
        return sub(_lift(other, self), self)

    def __mul__(self, other):
        return mul(self, _lift(other, self))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _lift(x, like):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _toposort(root):
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited and p.requires_grad:
                stack.append((p, False))
    return order


def _unbroadcast(g, shape):
    """Reduce a gradient back to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- primitive ops -----------------------------------------------------


def add(a, b):
    out = Tensor(a.data + b.data, (a, b))

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    out._backward = bwd
    return out


def sub(a, b):
    out = Tensor(a.data - b.data, (a, b))

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g, b.shape))

    out._backward = bwd
    return out


def mul(a, b):
    out = Tensor(a.data * b.data, (a, b))

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    out._backward = bwd
    return out


def matmul(a, b):
    if a.data.shape[-1] != b.data.shape[0]:
        raise ValueError(
            f"matmul dimension mismatch: {a.data.shape} @ {b.data.shape}"
        )
    out = Tensor(a.data @ b.data, (a, b))

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad:
            b.accumulate_grad(a.data.T @ g)

    out._backward = bwd
    return out


def sigmoid(x):
    val = 1.0 / (1.0 + np.exp(-x.data))
    out = Tensor(val, (x,))

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(g * val * (1.0 - val))

    out._backward = bwd
    return out


def tanh(x):
    val = np.tanh(x.data)
    out = Tensor(val, (x,))

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(g * (1.0 - val * val))

    out._backward = bwd
    return out


def log_softmax(x):
    """Log-softmax over the last axis, max-subtracted for stability."""
    m = np.max(x.data, axis=-1, keepdims=True)
    s = x.data - m
    lse = np.log(np.sum(np.exp(s), axis=-1, keepdims=True))
    val = s - lse
    out = Tensor(val, (x,))

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(g - np.exp(val) * g.sum(axis=-1, keepdims=True))

    out._backward = bwd
    return out


def softmax(x):
    m = np.max(x.data, axis=-1, keepdims=True)
    e = np.exp(x.data - m)
    val = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(val, (x,))

    def bwd(g):
        if x.requires_grad:
            dot = (g * val).sum(axis=-1, keepdims=True)
            x.accumulate_grad(val * (g - dot))

    out._backward = bwd
    return out


def tsum(x):
    out = Tensor(np.asarray(x.data.sum(), dtype=x.data.dtype), (x,))

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(np.full_like(x.data, g))

    out._backward = bwd
    return out


def reshape(x, shape):
    out = Tensor(x.data.reshape(shape), (x,))

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(g.reshape(x.shape))

    out._backward = bwd
    return out


def transpose(x):
    out = Tensor(x.data.T.copy(), (x,))

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(g.T)

    out._backward = bwd
    return out


def rows(x, start, stop):
    """Row slice x[start:stop] along axis 0."""
    out = Tensor(x.data[start:stop], (x,))

    def bwd(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[start:stop] = g
            x.accumulate_grad(full)

    out._backward = bwd
    return out


def concat_rows(parts):
    out = Tensor(np.concatenate([p.data for p in parts], axis=0), parts)
    offsets = np.cumsum([0] + [p.data.shape[0] for p in parts])

    def bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p.accumulate_grad(g[lo:hi])

    out._backward = bwd
    return out


def add_const(x, c):
    """Add a non-differentiated constant array; gradient passes through."""
    out = Tensor(x.data + np.asarray(c, dtype=x.data.dtype), (x,))

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(g)

    out._backward = bwd
    return out


def outer_add(a, b):
    """[T,J] x [U,J] -> [T,U,J] with out[t,u] = a[t] + b[u]."""
    out = Tensor(a.data[:, None, :] + b.data[None, :, :], (a, b))

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g.sum(axis=1))
        if b.requires_grad:
            b.accumulate_grad(g.sum(axis=0))

    out._backward = bwd
    return out


def gather_rows(table, ids):
    """Embedding lookup: rows of `table` selected by integer `ids`."""
    idx = np.asarray(ids, dtype=np.int64)
    out = Tensor(table.data[idx], (table,))

    def bwd(g):
        if table.requires_grad:
            full = np.zeros_like(table.data)
            np.add.at(full, idx, g)
            table.accumulate_grad(full)

    out._backward = bwd
    return out


def conv1d_causal(x, w, b):
    """Causal 1-D convolution over time.

    x: [T, Cin], w: [K, Cin, Cout], b: [Cout]. Output frame t sees input
    frames t-K+1..t (zero padded on the left), so the op is streamable.
    """
    T = x.data.shape[0]
    K, cin, cout = w.data.shape
    if x.data.shape[1] != cin:
        raise ValueError(f"conv1d channel mismatch: x {x.data.shape} vs w {w.data.shape}")
    pad = np.zeros((K - 1 + T, cin), dtype=x.data.dtype)
    pad[K - 1:] = x.data
    val = np.zeros((T, cout), dtype=x.data.dtype)
    for k in range(K):
        val += pad[k:k + T] @ w.data[k]
    val += b.data
    out = Tensor(val, (x, w, b))

    def bwd(g):
        if x.requires_grad:
            gx_pad = np.zeros_like(pad)
            for k in range(K):
                gx_pad[k:k + T] += g @ w.data[k].T
            x.accumulate_grad(gx_pad[K - 1:])
        if w.requires_grad:
            gw = np.zeros_like(w.data)
            for k in range(K):
                gw[k] = pad[k:k + T].T @ g
            w.accumulate_grad(gw)
        if b.requires_grad:
            b.accumulate_grad(g.sum(axis=0))

    out._backward = bwd
    return out


def constant(data, name=None):
    return Tensor(np.asarray(data, dtype=_DEFAULT_DTYPE), name=name)
