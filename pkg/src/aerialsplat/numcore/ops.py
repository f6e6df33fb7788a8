"""Differentiable primitives.

Every primitive computes its forward value with numpy and, when any input is
on the tape, records a closure returning the gradient for each input. Binary
elementwise ops follow numpy broadcasting; gradients are summed back to the
input shape.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, make_node

#: name -> primitive callable; the grad-check suite covers every entry.
REGISTRY: dict[str, Callable] = {}


def register(name: str):
    def deco(fn):
        REGISTRY[name] = fn
        fn.op_name = name
        return fn

    return deco


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# -- binary elementwise --------------------------------------------------------

@register("add")
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return make_node(a.data + b.data, (a, b),
                     lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


@register("sub")
def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return make_node(a.data - b.data, (a, b),
                     lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


@register("mul")
def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def bw(g):
        return (_unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                _unbroadcast(g * a.data, b.shape) if b.requires_grad else None)

    return make_node(a.data * b.data, (a, b), bw, "mul")


@register("div")
def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    out = a.data / b.data

    def bw(g):
        return (_unbroadcast(g / b.data, a.shape) if a.requires_grad else None,
                _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None)

    return make_node(out, (a, b), bw, "div")


@register("maximum")
def maximum(a, b) -> Tensor:
    """Elementwise max; on ties the gradient goes to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("maximum", a, b)
    pick_a = a.data >= b.data
    return make_node(np.where(pick_a, a.data, b.data), (a, b),
                     lambda g: (_unbroadcast(np.where(pick_a, g, 0.0), a.shape),
                                _unbroadcast(np.where(pick_a, 0.0, g), b.shape)), "maximum")


@register("minimum")
def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("minimum", a, b)
    pick_a = a.data <= b.data
    return make_node(np.where(pick_a, a.data, b.data), (a, b),
                     lambda g: (_unbroadcast(np.where(pick_a, g, 0.0), a.shape),
                                _unbroadcast(np.where(pick_a, 0.0, g), b.shape)), "minimum")


def where(cond, a, b) -> Tensor:
    """Select elementwise; ``cond`` is a constant boolean array."""
    cond = np.asarray(cond.data if isinstance(cond, Tensor) else cond, dtype=bool)
    a, b = as_tensor(a), as_tensor(b)
    return make_node(np.where(cond, a.data, b.data), (a, b),
                     lambda g: (_unbroadcast(np.where(cond, g, 0.0), a.shape),
                                _unbroadcast(np.where(cond, 0.0, g), b.shape)), "where")


# -- unary elementwise ---------------------------------------------------------

@register("neg")
def neg(x) -> Tensor:
    x = as_tensor(x)
    return make_node(-x.data, (x,), lambda g: (-g,), "neg")


@register("power")
def power(x, p: float) -> Tensor:
    x = as_tensor(x)
    p = float(p)
    return make_node(x.data ** p, (x,), lambda g: (g * p * x.data ** (p - 1.0),), "power")


@register("exp")
def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return make_node(out, (x,), lambda g: (g * out,), "exp")


@register("log")
def log(x) -> Tensor:
    x = as_tensor(x)
    return make_node(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


@register("sqrt")
def sqrt(x) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return make_node(out, (x,), lambda g: (0.5 * g / out,), "sqrt")


def _sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@register("sigmoid")
def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = _sigmoid(x.data)
    return make_node(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


@register("tanh")
def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return make_node(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


@register("softplus")
def softplus(x) -> Tensor:
    x = as_tensor(x)
    out = np.logaddexp(0.0, x.data)
    return make_node(out, (x,), lambda g: (g * _sigmoid(x.data),), "softplus")


@register("relu")
def relu(x) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    return make_node(np.where(pos, x.data, 0.0), (x,), lambda g: (np.where(pos, g, 0.0),), "relu")


_GELU_C = math.sqrt(2.0 / math.pi)


@register("gelu")
def gelu(x) -> Tensor:
    """tanh approximation of GELU."""
    x = as_tensor(x)
    v = x.data
    inner = _GELU_C * (v + 0.044715 * v ** 3)
    t = np.tanh(inner)
    out = 0.5 * v * (1.0 + t)

    def bw(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * v * v)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * dinner),)

    return make_node(out, (x,), bw, "gelu")


@register("abs")
def abs(x) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    return make_node(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),), "abs")


@register("huber")
def huber(x, delta: float = 1.0) -> Tensor:
    """Huber penalty; the derivative at exactly |x| == delta is taken as 0."""
    x = as_tensor(x)
    a = np.abs(x.data)
    out = np.where(a <= delta, 0.5 * x.data ** 2, delta * (a - 0.5 * delta))

    def bw(g):
        d = np.where(a < delta, x.data, np.where(a > delta, delta * np.sign(x.data), 0.0))
        return (g * d,)

    return make_node(out, (x,), bw, "huber")


# -- reductions ----------------------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


@register("sum")
def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes) if axes else g
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_node(out, (x,), bw, "sum")


@register("mean")
def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    n = 1
    for a in axes:
        n *= x.shape[a]
    out = x.data.mean(axis=axes, keepdims=keepdims) if axes else x.data.copy()

    def bw(g):
        if not keepdims and axes:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / n, x.shape).copy(),)

    return make_node(out, (x,), bw, "mean")


@register("softmax")
def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_node(out, (x,), bw, "softmax")


@register("layer_norm")
def layer_norm(x, gain=None, bias=None, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply optional gain and bias."""
    x = as_tensor(x)
    d = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    parents = [x]
    out = xhat
    if gain is not None:
        gain = as_tensor(gain)
        if gain.shape != (d,):
            raise ShapeError("layer_norm", x.shape, gain.shape)
        out = out * gain.data
        parents.append(gain)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (d,):
            raise ShapeError("layer_norm", x.shape, bias.shape)
        out = out + bias.data
        parents.append(bias)

    def bw(g):
        gx = g * gain.data if gain is not None else g
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                    - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        grads = [dx]
        if gain is not None:
            grads.append(_unbroadcast(g * xhat, gain.shape))
        if bias is not None:
            grads.append(_unbroadcast(g, bias.shape))
        return tuple(grads)

    return make_node(out, parents, bw, "layer_norm")


# -- linear algebra ------------------------------------------------------------

@register("matmul")
def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None

    def bw(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(out, (a, b), bw, "matmul")


# -- structural ----------------------------------------------------------------

@register("reshape")
def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, tuple(shape) if hasattr(shape, "__len__") else (shape,)) from None
    return make_node(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


@register("transpose")
def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return make_node(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


@register("slice")
def slice(x, idx) -> Tensor:  # noqa: A001
    """Basic or advanced indexing; repeated indices accumulate in backward."""
    x = as_tensor(x)
    if isinstance(idx, Tensor):
        idx = idx.data.astype(np.int64)
    out = x.data[idx]

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return make_node(np.array(out, copy=True), (x,), bw, "slice")


@register("concat")
def concat(xs: Sequence, axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    try:
        out = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError:
        raise ShapeError("concat", *[x.shape for x in xs]) from None
    sizes = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=axis))

    return make_node(out, xs, bw, "concat")


@register("stack")
def stack(xs: Sequence, axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    try:
        out = np.stack([x.data for x in xs], axis=axis)
    except ValueError:
        raise ShapeError("stack", *[x.shape for x in xs]) from None

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(xs)))

    return make_node(out, xs, bw, "stack")


@register("broadcast_to")
def broadcast_to(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise ShapeError("broadcast_to", x.shape, tuple(shape)) from None
    return make_node(out, (x,), lambda g: (_unbroadcast(g, x.shape),), "broadcast_to")


# -- composites (not primitives; built from the ones above) --------------------

def square(x) -> Tensor:
    x = as_tensor(x)
    return mul(x, x)


def norm(x, axis=-1, keepdims: bool = False, eps: float = 0.0) -> Tensor:
    s = sum(mul(x, x), axis=axis, keepdims=keepdims)
    return sqrt(add(s, eps)) if eps else sqrt(s)


def clamp_min(x, lo: float) -> Tensor:
    return maximum(x, lo)


def masked_mean(x, mask) -> Tensor:
    """Mean of ``x`` over entries where the constant ``mask`` holds."""
    mask = np.asarray(mask, dtype=np.float64)
    count = float(np.broadcast_to(mask, x.shape).sum())
    if count == 0.0:
        return Tensor(0.0)
    return div(sum(mul(x, mask)), count)
