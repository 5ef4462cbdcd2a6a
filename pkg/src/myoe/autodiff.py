"""Reverse-mode automatic differentiation on numpy arrays.

A Tensor wraps an ndarray and remembers how it was produced. Calling
``backward`` on a scalar Tensor walks the recorded graph in reverse
topological order and accumulates gradients into every Tensor created
with ``requires_grad=True``. Nodes whose inputs carry no gradient are
constants and record nothing, so graphs stay small.

Compute is 32-bit by default (parameters are created float32); gradient
checking builds 64-bit instances.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "as_tensor",
    "constant",
    "stop_gradient",
    "concat",
    "maximum",
    "gradients",
    "grad_check",
    "GradCheckReport",
]


class Tensor:
    """Array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bw")

    def __init__(self, data, requires_grad=False):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._bw = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse-mode sweep from a scalar node."""
        if self.data.size != 1:
            raise ValueError("backward requires a scalar loss, got shape %r" % (self.shape,))
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._bw is not None and node.grad is not None:
                node._bw(node.grad)

    # -- operator sugar ------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other, like=self), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other, like=self), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def tanh(self):
        return tanh(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, grad={self.requires_grad})"


def _toposort(root):
    order, seen, stack = [], set(), [(root, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def constant(x, dtype=None):
    return Tensor(np.asarray(x, dtype=dtype))


def _node(data, parents, bw):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bw = bw
    return out


def _accum(t, g):
    # Gradients are never mutated in place, so views are safe to hold.
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _unbroadcast(g, shape):
    """Sum gradient over axes that were broadcast in the forward pass."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic -------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b, like=a)
    out_data = a.data + b.data

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _node(out_data, (a, b), bw)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b, like=a)
    out_data = a.data - b.data

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _node(out_data, (a, b), bw)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b, like=a)
    out_data = a.data * b.data

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(out_data, (a, b), bw)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b, like=a)
    out_data = a.data / b.data

    def bw(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * out_data / b.data, b.data.shape))

    return _node(out_data, (a, b), bw)


def neg(a):
    a = as_tensor(a)

    def bw(g):
        _accum(a, -g)

    return _node(-a.data, (a,), bw)


def power(a, p):
    a = as_tensor(a)
    p = float(p)
    out_data = a.data ** p

    def bw(g):
        _accum(a, g * p * a.data ** (p - 1.0))

    return _node(out_data, (a,), bw)


def square(a):
    a = as_tensor(a)

    def bw(g):
        _accum(a, g * (2.0 * a.data))

    return _node(a.data * a.data, (a,), bw)


def sqrt(a):
    a = as_tensor(a)
    out_data = np.sqrt(a.data)

    def bw(g):
        _accum(a, g * (0.5 / out_data))

    return _node(out_data, (a,), bw)


# -- nonlinearities ----------------------------------------------------

def tanh(a):
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def bw(g):
        _accum(a, g * (1.0 - out_data * out_data))

    return _node(out_data, (a,), bw)


def sigmoid(a):
    a = as_tensor(a)
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def bw(g):
        _accum(a, g * out_data * (1.0 - out_data))

    return _node(out_data, (a,), bw)


def exp(a):
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def bw(g):
        _accum(a, g * out_data)

    return _node(out_data, (a,), bw)


def log(a):
    a = as_tensor(a)

    def bw(g):
        _accum(a, g / a.data)

    return _node(np.log(a.data), (a,), bw)


def softplus(a):
    """log(1 + e^x), computed stably."""
    a = as_tensor(a)
    out_data = np.logaddexp(0.0, a.data)

    def bw(g):
        _accum(a, g / (1.0 + np.exp(-a.data)))

    return _node(out_data, (a,), bw)


# -- shaping and reductions ---------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b, like=a)
    out_data = a.data @ b.data

    def bw(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _node(out_data, (a, b), bw)


def reduce_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape))

    return _node(np.asarray(out_data), (a,), bw)


def reduce_mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    denom = a.data.size if axis is None else a.data.shape[axis]

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g / denom, a.data.shape))

    return _node(np.asarray(out_data), (a,), bw)


def reshape(a, shape):
    a = as_tensor(a)

    def bw(g):
        _accum(a, g.reshape(a.data.shape))

    return _node(a.data.reshape(shape), (a,), bw)


def transpose(a):
    a = as_tensor(a)

    def bw(g):
        _accum(a, g.T)

    return _node(a.data.T, (a,), bw)


def take(a, idx):
    """Basic slicing; gradient scatters back into a zero array."""
    a = as_tensor(a)
    out_data = a.data[idx]

    def bw(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        _accum(a, full)

    return _node(out_data, (a,), bw)


def concat(parts, axis=-1):
    parts = [as_tensor(p) for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(p, g[tuple(sl)])

    return _node(out_data, tuple(parts), bw)


def maximum(a, floor):
    """Elementwise max against a constant; subgradient 0 below the floor."""
    a = as_tensor(a)
    floor = float(floor)
    mask = a.data > floor

    def bw(g):
        _accum(a, g * mask)

    return _node(np.maximum(a.data, floor), (a,), bw)


def clip(a, lo, hi):
    a = as_tensor(a)
    mask = (a.data > lo) & (a.data < hi)

    def bw(g):
        _accum(a, g * mask)

    return _node(np.clip(a.data, lo, hi), (a,), bw)


def stop_gradient(a):
    """Graph barrier: value passes, gradient does not."""
    a = as_tensor(a)
    return Tensor(a.data)


# -- gradient extraction and checking -----------------------------------

def gradients(loss, params):
    """Backward from ``loss`` and return {name: gradient array} over params.

    ``params`` is an iterable of (name, Tensor). Parameters the loss never
    touched get zero gradients. Raises if the loss is not scalar.
    """
    pairs = list(params)
    for _, t in pairs:
        t.grad = None
    loss.backward()
    out = {}
    for name, t in pairs:
        out[name] = np.zeros_like(t.data) if t.grad is None else t.grad
        t.grad = None
    return out


class GradCheckReport:
    """Per-parameter agreement between analytic and central-difference grads."""

    def __init__(self, eps):
        self.eps = eps
        self.per_param = {}  # name -> max relative error

    def record(self, name, rel_err):
        self.per_param[name] = max(rel_err, self.per_param.get(name, 0.0))

    @property
    def max_rel_err(self):
        return max(self.per_param.values()) if self.per_param else 0.0

    def ok(self, tol):
        return self.max_rel_err <= tol

    def __repr__(self):
        worst = max(self.per_param, key=self.per_param.get) if self.per_param else None
        return f"GradCheckReport(max_rel_err={self.max_rel_err:.3e}, worst={worst}, eps={self.eps})"


def grad_check(build_loss, params, eps=1e-4, noise_factor=64.0):
    """Compare analytic gradients against central finite differences.

    ``build_loss`` must rebuild the (deterministic) scalar loss from scratch
    on every call so parameter perturbations take effect. Relative error is
    |g_a - g_n| / max(1e-8, |g_a| + |g_n|), maximized over tensor entries.

    The difference quotient carries rounding noise of roughly
    machine_eps * |loss| / eps, so entries whose absolute disagreement sits
    below that bound are unmeasurable by differences and count as exact.
    """
    pairs = list(params)
    analytic = gradients(build_loss(), pairs)
    loss0 = abs(float(build_loss().data))
    noise_bound = noise_factor * np.finfo(np.float64).eps * max(1.0, loss0) / (2.0 * eps)
    report = GradCheckReport(eps)
    for name, t in pairs:
        ga = analytic[name]
        flat = t.data.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(build_loss().data)
            flat[i] = orig - eps
            down = float(build_loss().data)
            flat[i] = orig
            gn = (up - down) / (2.0 * eps)
            gai = float(ga.reshape(-1)[i])
            if abs(gai - gn) <= noise_bound:
                continue
            worst = max(worst, abs(gai - gn) / max(1e-8, abs(gai) + abs(gn)))
        report.record(name, worst)
    return report
