"""A small reverse-mode autograd over numpy arrays.

Only the operations the encoder needs are provided.  Several are fused
(softmax, layer norm, cross-entropy) with hand-written backward passes,
which keeps the graph short and the memory footprint low.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

from ..errors import GraphNotRecorded, LabelOutOfRange, ShapeMismatch

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf that requires it."""
        if not self.requires_grad:
            raise GraphNotRecorded("tensor does not depend on any parameter with a recorded graph")
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward() without a seed gradient needs a scalar")
            grad = np.ones_like(self.data)
        order = _toposort(self)
        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def _toposort(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype or np.float64))


def _result(data, parents, backward) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b, a.data.dtype if isinstance(a, Tensor) else None)
    sa, sb = a.shape, b.shape
    return _result(
        a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))
    )


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    if np.isscalar(b):
        c = b
        return _result(a.data * c, (a,), lambda g: (g * c,))
    b = as_tensor(b)
    sa, sb = a.shape, b.shape
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, sa), _unbroadcast(g * a.data, sb)),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b``; ``b`` may be a 2-D weight shared over ``a``'s leading dims."""
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
    shared = b.ndim == 2 and a.ndim > 2
    if shared:
        k, n = b.shape
        out = (a.data.reshape(-1, k) @ b.data).reshape(*a.shape[:-1], n)
    else:
        out = a.data @ b.data

    def backward(g):
        ga = gb = None
        if shared:
            g2 = g.reshape(-1, n)
            if a.requires_grad:
                ga = (g2 @ b.data.T).reshape(a.shape)
            if b.requires_grad:
                gb = a.data.reshape(-1, k).T @ g2
            return ga, gb
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _result(out, (a, b), backward)


def swapaxes(a: Tensor, i: int = -1, j: int = -2) -> Tensor:
    return _result(np.swapaxes(a.data, i, j), (a,), lambda g: (np.swapaxes(g, i, j),))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _result(a.data * mask, (a,), lambda g: (g * mask,))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data - a.data.max(axis=axis, keepdims=True)
    np.exp(x, out=x)
    x /= x.sum(axis=axis, keepdims=True)
    y = x

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _result(y, (a,), backward)


def standardize(x: np.ndarray, eps: float = 1e-5) -> tuple[np.ndarray, np.ndarray]:
    """Zero-mean, unit-variance over the last axis; returns (xhat, 1/std)."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    return xc * inv, inv


def layer_norm(a: Tensor, scale: Tensor, offset: Tensor, eps: float = 1e-5) -> Tensor:
    xhat, inv = standardize(a.data, eps)
    n = a.shape[-1]

    def backward(g):
        dxhat = g * scale.data
        dx = inv / n * (
            n * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        flat_g = g.reshape(-1, n)
        return dx, (flat_g * xhat.reshape(-1, n)).sum(axis=0), flat_g.sum(axis=0)

    return _result(xhat * scale.data + offset.data, (a, scale, offset), backward)


def dropout(a: Tensor, p: float, train: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; the identity (same object) in eval mode or when p == 0."""
    if not 0 <= p < 1:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0:
        return a
    mask = (rng.random(a.shape) >= p).astype(a.data.dtype) / (1 - p)
    return _result(a.data * mask, (a,), lambda g: (g * mask,))


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood over all tokens; logits are (..., C)."""
    c = logits.shape[-1]
    z = logits.data.reshape(-1, c)
    y = np.asarray(labels).reshape(-1)
    if len(y) != len(z):
        raise ShapeMismatch(f"{len(y)} labels for {len(z)} tokens")
    if y.size and (y.min() < 0 or y.max() >= c):
        raise LabelOutOfRange(f"labels must lie in [0, {c})")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(len(y))
    loss = np.mean(log_norm - shifted[rows, y])

    def backward(g):
        p = np.exp(shifted - log_norm[:, None])
        p[rows, y] -= 1.0
        return ((g / len(y)) * p).reshape(logits.shape)

    return _result(np.asarray(loss, dtype=z.dtype), (logits,), lambda g: (backward(g),))


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _result(
        np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),)
    )


def mean_all(a: Tensor) -> Tensor:
    return mul(sum_all(a), 1.0 / math.prod(a.shape))
