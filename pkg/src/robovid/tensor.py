"""Dense-tensor reverse-mode autodiff engine.

Define-by-run on row-major numpy arrays, float32 for training and float64
for gradient checking. Broadcasting is deliberately restricted to scalars
and trailing-dimension vectors so every backward rule stays auditable.
The graph is rebuilt per step; backward walks the exact reverse
construction order, so repeated runs are bit-identical.
"""

import numpy as np
from scipy.special import erf

_ALLOWED_DTYPES = (np.float32, np.float64)

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT2PI = 0.3989422804014327


class Tensor:
    """A dense array plus optional gradient, node of a backward graph."""

    def __init__(self, data, requires_grad=False, dtype=None, _parents=(), _backward=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self.grad = None
        self._parents = _parents
        self._backprop = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data)

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad = self.grad + g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse-mode sweep from a scalar output."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar output, got shape {self.data.shape}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backprop is not None:
                node._backprop(node.grad)

    # operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, neg(_coerce(other, self.dtype)))

    def __rsub__(self, other):
        return add(neg(self), _coerce(other, self.dtype))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)


def _coerce(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _check_same_dtype(a, b):
    if a.dtype != b.dtype:
        raise ValueError(f"mixed dtypes {a.dtype.name} vs {b.dtype.name}; build the graph in one precision")


def _broadcast_ok(sa, sb):
    # identical shapes, either side scalar, or a trailing-dim vector
    if sa == sb or sa == () or sb == ():
        return True
    for big, small in ((sa, sb), (sb, sa)):
        if len(small) == 1 and len(big) >= 1 and big[-1] == small[0]:
            return True
    return False


def _unbroadcast(g, shape):
    """Sum a gradient down to `shape` (scalar or trailing-dim operand)."""
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum(), dtype=g.dtype)
    axes = tuple(range(g.ndim - 1))
    return g.sum(axis=axes).reshape(shape)


# elementwise ops ----------------------------------------------------

def add(a, b):
    a = a if isinstance(a, Tensor) else _coerce(a, b.dtype)
    b = _coerce(b, a.dtype)
    _check_same_dtype(a, b)
    if not _broadcast_ok(a.shape, b.shape):
        raise ValueError(f"add: incompatible shapes {a.shape} and {b.shape}")
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return Tensor(out_data, _parents=(a, b), _backward=backward)


def mul(a, b):
    a = a if isinstance(a, Tensor) else _coerce(a, b.dtype)
    b = _coerce(b, a.dtype)
    _check_same_dtype(a, b)
    if not _broadcast_ok(a.shape, b.shape):
        raise ValueError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return Tensor(out_data, _parents=(a, b), _backward=backward)


def neg(a):
    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(-g)

    return Tensor(-a.data, _parents=(a,), _backward=backward)


def scale(a, s):
    """Multiply by a python scalar."""
    s = float(s)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * s)

    return Tensor(a.data * np.asarray(s, dtype=a.dtype), _parents=(a,), _backward=backward)


def gelu(a):
    """Exact (erf) GELU."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out_data = (x * cdf).astype(a.dtype)

    def backward(g):
        if a.requires_grad:
            pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
            a.accumulate_grad(g * (cdf + x * pdf))

    return Tensor(out_data, _parents=(a,), _backward=backward)


# structural ops -----------------------------------------------------

def matmul(a, b):
    """Matrix product; leading batch dims, when present, must match exactly."""
    _check_same_dtype(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: inner extents differ, {a.shape} x {b.shape}")
    if a.shape[:-2] != b.shape[:-2]:
        raise ValueError(f"matmul: leading extents differ, {a.shape} x {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            b.accumulate_grad(np.swapaxes(a.data, -1, -2) @ g)

    return Tensor(out_data, _parents=(a, b), _backward=backward)


def reshape(a, shape):
    old = a.shape
    out_data = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g.reshape(old))

    return Tensor(out_data, _parents=(a,), _backward=backward)


def transpose(a, axes=None):
    axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    out_data = a.data.transpose(axes)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g.transpose(inv))

    return Tensor(out_data, _parents=(a,), _backward=backward)


def concat(tensors, axis=0):
    tensors = list(tensors)
    for t in tensors[1:]:
        _check_same_dtype(tensors[0], t)
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(idx)])

    return Tensor(out_data, _parents=tuple(tensors), _backward=backward)


def slice_(a, key):
    """Basic (view-style) slicing; gradient scatters back into place."""
    out_data = a.data[key]

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[key] = g
            a.accumulate_grad(full)

    return Tensor(out_data, _parents=(a,), _backward=backward)


# reductions ---------------------------------------------------------

def reduce_sum(a, axis=None, keepdims=False):
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if a.requires_grad:
            gg = g
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis=axis)
            a.accumulate_grad(np.broadcast_to(gg, a.shape).astype(a.dtype))

    return Tensor(out_data, _parents=(a,), _backward=backward)


def reduce_mean(a, axis=None, keepdims=False):
    if axis is None:
        n = a.size
    else:
        n = a.shape[axis] if isinstance(axis, int) else int(np.prod([a.shape[ax] for ax in axis]))
    return scale(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def mse(a, b):
    """mean((a - b)^2) over every component; exactly 0 when a is b."""
    _check_same_dtype(a, b)
    if a.shape != b.shape:
        raise ValueError(f"mse: shapes differ, {a.shape} vs {b.shape}")
    diff = a.data - b.data
    out_data = np.asarray((diff * diff).mean(), dtype=a.dtype)
    coef = 2.0 / a.size

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad((coef * g) * diff)
        if b.requires_grad:
            b.accumulate_grad((-coef * g) * diff)

    return Tensor(out_data, _parents=(a, b), _backward=backward)


# normalization and attention kernels --------------------------------

def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize the last dimension to zero mean / unit variance, then affine."""
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise ValueError(f"layer_norm: affine shapes {gain.shape}/{bias.shape} do not match feature dim {x.shape[-1]}")
    _check_same_dtype(x, gain)
    d = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gain.data + bias.data

    def backward(g):
        if gain.requires_grad:
            gain.accumulate_grad((g * xhat).reshape(-1, d).sum(axis=0))
        if bias.requires_grad:
            bias.accumulate_grad(g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            gh = g * gain.data
            # d xhat / dx through mean and variance
            term = gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
            x.accumulate_grad(term * inv)

    return Tensor(out_data, _parents=(x, gain, bias), _backward=backward)


def softmax_lastdim(x, mask=None):
    """Max-stabilized softmax over the last axis.

    `mask` is a boolean array (broadcastable over leading axes) marking
    allowed positions; masked entries get probability exactly 0. A row
    with no allowed position is an error rather than a silent NaN.
    """
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.shape != x.shape[-2:] and m.shape != x.shape:
            raise ValueError(f"softmax mask shape {m.shape} incompatible with {x.shape}")
        m = np.broadcast_to(m, x.shape)
        if not m.any(axis=-1).all():
            raise ValueError("softmax: a row is fully masked")
        neg_inf = np.asarray(-np.inf, dtype=x.dtype)
        scores = np.where(m, x.data, neg_inf)
    else:
        scores = x.data
    top = scores.max(axis=-1, keepdims=True)
    e = np.exp(scores - top)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        if x.requires_grad:
            dot = (g * p).sum(axis=-1, keepdims=True)
            x.accumulate_grad(p * (g - dot))

    return Tensor(p.astype(x.dtype), _parents=(x,), _backward=backward)


# guards -------------------------------------------------------------

def assert_finite(arr, what):
    """NaN/Inf never silently reaches parameters; fail loudly instead."""
    if not np.isfinite(arr).all():
        raise FloatingPointError(f"non-finite values in {what}")
