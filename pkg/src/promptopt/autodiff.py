"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Covers exactly the operations the graph encoder and policy need. When no
input requires gradients, ops skip building the backward graph, so the
same code path serves both plain and traced evaluation with identical
forward arithmetic.
"""
from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into .grad for every reachable tensor."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar root")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def wrap(value, requires_grad: bool = False) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=requires_grad)


def _accumulate(t: Tensor, grad: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += grad


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward=backward)
    return Tensor(data)


def add(a, b) -> Tensor:
    a, b = wrap(a), wrap(b)
    out = _make(a.data + b.data, (a, b), None)
    if out.requires_grad:
        def backward(g):
            if a.requires_grad:
                _accumulate(a, _unbroadcast(g, a.data.shape))
            if b.requires_grad:
                _accumulate(b, _unbroadcast(g, b.data.shape))
        out._backward = backward
    return out


def sub(a, b) -> Tensor:
    a, b = wrap(a), wrap(b)
    out = _make(a.data - b.data, (a, b), None)
    if out.requires_grad:
        def backward(g):
            if a.requires_grad:
                _accumulate(a, _unbroadcast(g, a.data.shape))
            if b.requires_grad:
                _accumulate(b, _unbroadcast(-g, b.data.shape))
        out._backward = backward
    return out


def mul(a, b) -> Tensor:
    a, b = wrap(a), wrap(b)
    out = _make(a.data * b.data, (a, b), None)
    if out.requires_grad:
        def backward(g):
            if a.requires_grad:
                _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                _accumulate(b, _unbroadcast(g * a.data, b.data.shape))
        out._backward = backward
    return out


def div(a, b) -> Tensor:
    a, b = wrap(a), wrap(b)
    out = _make(a.data / b.data, (a, b), None)
    if out.requires_grad:
        def backward(g):
            if a.requires_grad:
                _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
            if b.requires_grad:
                _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))
        out._backward = backward
    return out


def matmul(a, b) -> Tensor:
    a, b = wrap(a), wrap(b)
    out = _make(a.data @ b.data, (a, b), None)
    if out.requires_grad:
        a_nd, b_nd = a.data.ndim, b.data.ndim

        def backward(g):
            if a_nd == 2 and b_nd == 2:
                if a.requires_grad:
                    _accumulate(a, g @ b.data.T)
                if b.requires_grad:
                    _accumulate(b, a.data.T @ g)
            elif a_nd == 1 and b_nd == 2:
                if a.requires_grad:
                    _accumulate(a, b.data @ g)
                if b.requires_grad:
                    _accumulate(b, np.outer(a.data, g))
            elif a_nd == 2 and b_nd == 1:
                if a.requires_grad:
                    _accumulate(a, np.outer(g, b.data))
                if b.requires_grad:
                    _accumulate(b, a.data.T @ g)
            elif a_nd == 1 and b_nd == 1:
                if a.requires_grad:
                    _accumulate(a, g * b.data)
                if b.requires_grad:
                    _accumulate(b, g * a.data)
            else:  # pragma: no cover - not used
                raise ValueError(f"unsupported matmul ranks {a_nd}x{b_nd}")

        out._backward = backward
    return out


def transpose(a) -> Tensor:
    a = wrap(a)
    out = _make(a.data.T, (a,), None)
    if out.requires_grad:
        def backward(g):
            _accumulate(a, g.T)
        out._backward = backward
    return out


def sin(a) -> Tensor:
    a = wrap(a)
    out = _make(np.sin(a.data), (a,), None)
    if out.requires_grad:
        def backward(g):
            _accumulate(a, g * np.cos(a.data))
        out._backward = backward
    return out


def exp(a) -> Tensor:
    a = wrap(a)
    value = np.exp(a.data)
    out = _make(value, (a,), None)
    if out.requires_grad:
        def backward(g):
            _accumulate(a, g * value)
        out._backward = backward
    return out


def log(a) -> Tensor:
    a = wrap(a)
    out = _make(np.log(a.data), (a,), None)
    if out.requires_grad:
        def backward(g):
            _accumulate(a, g / a.data)
        out._backward = backward
    return out


def sigmoid_np(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic for plain arrays."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus_np(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x) without overflow."""
    x = np.asarray(x, dtype=np.float64)
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def sigmoid(a) -> Tensor:
    a = wrap(a)
    value = sigmoid_np(a.data)
    out = _make(value, (a,), None)
    if out.requires_grad:
        def backward(g):
            _accumulate(a, g * value * (1.0 - value))
        out._backward = backward
    return out


def softplus(a) -> Tensor:
    a = wrap(a)
    out = _make(softplus_np(a.data), (a,), None)
    if out.requires_grad:
        def backward(g):
            _accumulate(a, g * sigmoid_np(a.data))
        out._backward = backward
    return out


def tanh(a) -> Tensor:
    a = wrap(a)
    value = np.tanh(a.data)
    out = _make(value, (a,), None)
    if out.requires_grad:
        def backward(g):
            _accumulate(a, g * (1.0 - value * value))
        out._backward = backward
    return out


def tsum(a, axis: int | None = None) -> Tensor:
    a = wrap(a)
    out = _make(a.data.sum(axis=axis), (a,), None)
    if out.requires_grad:
        def backward(g):
            if axis is None:
                _accumulate(a, np.broadcast_to(g, a.data.shape).copy())
            else:
                _accumulate(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())
        out._backward = backward
    return out


def tmean(a, axis: int | None = None) -> Tensor:
    a = wrap(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return div(tsum(a, axis=axis), float(count))


def concat(parts, axis: int = 0) -> Tensor:
    parts = [wrap(p) for p in parts]
    out = _make(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), None)
    if out.requires_grad:
        sizes = [p.data.shape[axis] for p in parts]

        def backward(g):
            offset = 0
            for p, size in zip(parts, sizes):
                if p.requires_grad:
                    index = [slice(None)] * g.ndim
                    index[axis] = slice(offset, offset + size)
                    _accumulate(p, g[tuple(index)])
                offset += size

        out._backward = backward
    return out


def stack(parts, axis: int = 0) -> Tensor:
    parts = [wrap(p) for p in parts]
    out = _make(np.stack([p.data for p in parts], axis=axis), tuple(parts), None)
    if out.requires_grad:
        def backward(g):
            for i, p in enumerate(parts):
                if p.requires_grad:
                    _accumulate(p, np.take(g, i, axis=axis))
        out._backward = backward
    return out


def gather_rows(a, indices) -> Tensor:
    a = wrap(a)
    idx = np.asarray(indices, dtype=np.intp)
    out = _make(a.data[idx], (a,), None)
    if out.requires_grad:
        def backward(g):
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            _accumulate(a, full)
        out._backward = backward
    return out


def reshape(a, shape) -> Tensor:
    a = wrap(a)
    out = _make(a.data.reshape(shape), (a,), None)
    if out.requires_grad:
        def backward(g):
            _accumulate(a, g.reshape(a.data.shape))
        out._backward = backward
    return out


def softmax1d(logits: Tensor) -> Tensor:
    """Softmax over a 1-D tensor; the max shift is treated as a constant."""
    shifted = sub(logits, float(logits.data.max()))
    exps = exp(shifted)
    return div(exps, tsum(exps))
