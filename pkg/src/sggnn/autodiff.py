"""A small reverse-mode differentiation engine over dense float64 matrices.

Graphs only ever enter as constant sparse operators (``sparse_matmul``), so
no gradient flows into an adjacency matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class Tensor:
    """A 2-D float64 array that remembers how it was produced."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_pullback", "name")

    def __init__(self, data, requires_grad=False, name=None):
        data = np.array(data, dtype=np.float64)
        if data.ndim == 0:
            data = data.reshape(1, 1)
        elif data.ndim == 1:
            data = data.reshape(1, -1)
        elif data.ndim != 2:
            raise ValueError("tensors are 2-D")
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._pullback = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.size != 1:
            raise ValueError("item() needs a single-element tensor")
        return float(self.data[0, 0])

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"


def _result(data, parents, pullback):
    """Wrap ``data``; record ``pullback`` only if some parent needs a gradient."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._pullback = pullback
    else:
        out._parents = ()
        out._pullback = None
    return out


def _shape_error(op, *shapes):
    return ValueError(f"{op}: incompatible shapes {' and '.join(map(str, shapes))}")


# -- primitives --------------------------------------------------------------

def matmul(a, b):
    if a.shape[1] != b.shape[0]:
        raise _shape_error("matmul", a.shape, b.shape)
    return _result(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def sparse_matmul(op, t):
    """Constant sparse operator times a tensor. ``op`` is a Graph or scipy matrix."""
    mat = op.to_scipy() if hasattr(op, "to_scipy") else sp.csr_matrix(op)
    if mat.shape[1] != t.shape[0]:
        raise _shape_error("sparse_matmul", mat.shape, t.shape)
    mat_t = mat.T.tocsr()
    return _result(np.asarray(mat @ t.data), (t,), lambda g: (np.asarray(mat_t @ g),))


def add(a, b):
    """Elementwise sum; ``b`` may also be a single row broadcast over ``a``."""
    if a.shape == b.shape:
        return _result(a.data + b.data, (a, b), lambda g: (g, g))
    if b.shape == (1, a.shape[1]):
        return _result(a.data + b.data, (a, b), lambda g: (g, g.sum(axis=0, keepdims=True)))
    raise _shape_error("add", a.shape, b.shape)


def mul(a, b):
    if a.shape != b.shape:
        raise _shape_error("mul", a.shape, b.shape)
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def sum_all(t):
    return _result(np.array([[t.data.sum()]]), (t,), lambda g: (np.full(t.shape, g[0, 0]),))


def relu(t):
    on = t.data > 0
    return _result(np.where(on, t.data, 0.0), (t,), lambda g: (g * on,))


def dropout(t, rate, rng):
    """Inverted dropout with an explicit generator; identity when ``rate == 0``."""
    if rate <= 0:
        return t
    keep = (rng.random(t.shape) >= rate) / (1.0 - rate)
    return _result(t.data * keep, (t,), lambda g: (g * keep,))


def concat_cols(tensors):
    tensors = list(tensors)
    rows = {t.shape[0] for t in tensors}
    if len(rows) != 1:
        raise _shape_error("concat_cols", *(t.shape for t in tensors))
    cuts = np.cumsum([t.shape[1] for t in tensors])[:-1]
    return _result(np.hstack([t.data for t in tensors]), tensors,
                   lambda g: tuple(np.split(g, cuts, axis=1)))


def select_col(t, j):
    """Column ``j`` of ``t`` as an ``(rows, 1)`` tensor."""
    def pullback(g):
        full = np.zeros(t.shape)
        full[:, j] = g[:, 0]
        return (full,)
    return _result(t.data[:, j:j + 1].copy(), (t,), pullback)


def scale_rows(t, w):
    """Multiply row ``n`` of ``t`` by ``w[n]``; ``w`` is ``(rows, 1)`` or ``(1, 1)``."""
    if w.shape not in ((t.shape[0], 1), (1, 1)):
        raise _shape_error("scale_rows", t.shape, w.shape)

    def pullback(g):
        gw = (g * t.data).sum(axis=1, keepdims=True)
        if w.shape == (1, 1):
            gw = gw.sum(keepdims=True)
        return g * w.data, gw
    return _result(t.data * w.data, (t, w), pullback)


def _softmax(x):
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows(t):
    s = _softmax(t.data)
    return _result(s, (t,), lambda g: (s * (g - (g * s).sum(axis=1, keepdims=True)),))


def softmax_vector(t):
    """Softmax of a single row vector ``(1, n)``."""
    if t.shape[0] != 1:
        raise _shape_error("softmax_vector", t.shape)
    return softmax_rows(t)


def log_softmax_rows(x):
    shifted = x - x.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def masked_cross_entropy(logits, labels, mask):
    """Mean negative log-likelihood over the rows selected by ``mask``."""
    labels = np.asarray(labels)
    mask = np.asarray(mask, dtype=bool)
    if len(labels) != logits.shape[0] or len(mask) != logits.shape[0]:
        raise _shape_error("masked_cross_entropy", logits.shape, labels.shape, mask.shape)
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        raise ValueError("masked_cross_entropy: empty mask")
    logp = log_softmax_rows(logits.data[idx])
    loss = -logp[np.arange(len(idx)), labels[idx]].mean()

    def pullback(g):
        grad = np.zeros(logits.shape)
        local = np.exp(logp)
        local[np.arange(len(idx)), labels[idx]] -= 1.0
        grad[idx] = local * (g[0, 0] / len(idx))
        return (grad,)
    return _result(np.array([[loss]]), (logits,), pullback)


# -- reverse pass ------------------------------------------------------------

def _tape(root):
    """Nodes reachable from ``root`` in reverse topological order (root first)."""
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
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    order.reverse()
    return order


def backward(loss, params=None):
    """Populate ``.grad`` on every leaf that requires a gradient.

    Gradients are overwritten, not accumulated. If ``params`` is given, their
    gradients are also returned, with zeros for parameters the loss does not
    depend on.
    """
    if loss.shape != (1, 1):
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads = {id(loss): np.ones((1, 1))}
    for node in _tape(loss):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._pullback is None:
            node.grad = g
            continue
        for parent, pg in zip(node._parents, node._pullback(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    if params is None:
        return None
    out = []
    for p in params:
        if p.grad is None or p.grad.shape != p.shape:
            p.grad = np.zeros(p.shape)
        out.append(p.grad)
    return out


def zero_grad(params):
    for p in params:
        p.grad = None


# -- parameters and optimizer ------------------------------------------------

def glorot_init(shape, rng, name=None):
    """Uniform(-a, a) with ``a = sqrt(6 / (fan_in + fan_out))``."""
    rng = np.random.default_rng(rng)
    fan_in, fan_out = shape
    if fan_in <= 0 or fan_out <= 0:
        raise ValueError("dimensions must be positive")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True, name=name)


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0


def adam_step(params, grads, state=None, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, applied in place to ``params``."""
    if state is None:
        state = AdamState()
    if not state.m:
        state.m = [np.zeros(p.shape) for p in params]
        state.v = [np.zeros(p.shape) for p in params]
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise _shape_error("adam_step", p.shape, g.shape)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state
