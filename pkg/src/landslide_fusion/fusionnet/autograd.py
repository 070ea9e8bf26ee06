"""A small reverse-mode autodiff engine over numpy arrays.

Every operation on a :class:`Tensor` that requires gradients records a
closure mapping the output gradient to parent gradients.  ``backward``
walks the recorded graph in reverse topological order.  Layer-level
primitives (layer norm, batch norm, softmax, GELU, BCE) are fused into
single nodes with hand-derived adjoints.
"""
from __future__ import annotations

import contextlib

import numpy as np

from ..errors import StateError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


def as_array(x) -> np.ndarray:
    """Unwrap a PatchStack (or anything else with an ndarray ``data`` field)."""
    if isinstance(x, np.ndarray):
        return x
    inner = getattr(x, "data", None)
    return inner if isinstance(inner, np.ndarray) else np.asarray(x)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    # -- graph ------------------------------------------------------------
    def backward(self, grad=None):
        if not self.requires_grad:
            raise StateError("tensor does not require grad; no graph was recorded")
        if grad is None:
            if self.data.size != 1:
                raise StateError("backward without a seed gradient needs a scalar tensor")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
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
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    def transpose(self, *axes):
        return transpose(self, axes[0] if len(axes) == 1 else axes)


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward):
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward)
    return Tensor(data)


# -- elementwise ----------------------------------------------------------

def add(a, b):
    a, b = _lift(a), _lift(b)
    out = a.data + b.data
    return _node(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a):
    return _node(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = _lift(a), _lift(b)
    out = a.data * b.data
    return _node(out, (a, b), lambda g: (_unbroadcast(g * b.data, a.shape),
                                         _unbroadcast(g * a.data, b.shape)))


def div(a, b):
    a, b = _lift(a), _lift(b)
    out = a.data / b.data
    return _node(out, (a, b), lambda g: (_unbroadcast(g / b.data, a.shape),
                                         _unbroadcast(-g * out / b.data, b.shape)))


def relu(a):
    mask = a.data > 0
    return _node(a.data * mask, (a,), lambda g: (g * mask,))


def sigmoid(a):
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


_GELU_C = float(np.sqrt(2.0 / np.pi))


def gelu(a):
    """Tanh approximation of GELU."""
    x = a.data
    x2 = x * x
    t = np.tanh(_GELU_C * x * (1.0 + 0.044715 * x2))
    out = 0.5 * x * (1.0 + t)

    def back(g):
        d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * d,)

    return _node(out, (a,), back)


# -- shape ----------------------------------------------------------------

def reshape(a, shape):
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes):
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _node(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def getitem(a, idx):
    def back(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _node(a.data[idx], (a,), back)


def concat(tensors, axis=-1):
    tensors = [_lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return _node(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))


# -- reductions -----------------------------------------------------------

def tsum(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(out, (a,), back)


def tmean(a, axis=None, keepdims=False):
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / count)


# -- linear algebra -------------------------------------------------------

def matmul(a, b):
    a, b = _lift(a), _lift(b)
    out = a.data @ b.data

    def back(g):
        if b.ndim == 2:
            ga = g @ b.data.T
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return _unbroadcast(ga, a.shape), gb
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(out, (a, b), back)


# -- fused layers ---------------------------------------------------------

def softmax(a, axis=-1):
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)
    return _node(out, (a,), lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


def _normalize_backward(dxhat, xhat, inv_std, axis):
    n = np.prod([xhat.shape[i] for i in np.atleast_1d(axis)])
    return inv_std / n * (n * dxhat - dxhat.sum(axis=axis, keepdims=True)
                          - xhat * (dxhat * xhat).sum(axis=axis, keepdims=True))


def layer_norm(x, gamma, beta, eps=1e-5):
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = xhat * gamma.data + beta.data
    lead = tuple(range(x.ndim - 1))

    def back(g):
        dx = _normalize_backward(g * gamma.data, xhat, inv_std, -1)
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _node(out, (x, gamma, beta), back)


def batch_norm(x, gamma, beta, eps=1e-5, stats=None):
    """Normalize over the batch axis of a ``B x F`` tensor.

    ``stats=None`` uses batch statistics (training); otherwise ``stats`` is
    the ``(mean, var)`` pair of running estimates.  Returns the output and
    the batch ``(mean, biased var)`` used.
    """
    if stats is None:
        mu = x.data.mean(axis=0, keepdims=True)
        var = x.data.var(axis=0, keepdims=True)
    else:
        mu, var = (np.asarray(s, dtype=x.dtype).reshape(1, -1) for s in stats)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = xhat * gamma.data + beta.data

    def back(g):
        dxhat = g * gamma.data
        if stats is None:
            dx = _normalize_backward(dxhat, xhat, inv_std, 0)
        else:
            dx = dxhat * inv_std
        return dx, (g * xhat).sum(axis=0), g.sum(axis=0)

    return _node(out, (x, gamma, beta), back), (mu.ravel(), var.ravel())


def dropout(x, rate, rng):
    if rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return _node(x.data * keep, (x,), lambda g: (g * keep,))


def bce_with_logits(logits, targets):
    """Mean binary cross-entropy in the ``max(x,0) - x*y + log1p(exp(-|x|))`` form."""
    x = logits.data
    y = np.asarray(targets, dtype=x.dtype).reshape(x.shape)
    losses = np.maximum(x, 0) - x * y + np.log1p(np.exp(-np.abs(x)))
    out = np.asarray(losses.mean(), dtype=x.dtype)
    p = 0.5 * (1.0 + np.tanh(0.5 * x))
    return _node(out, (logits,), lambda g: (g * (p - y) / x.size,))
