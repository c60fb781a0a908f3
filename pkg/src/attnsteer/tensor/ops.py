"""Primitive set and their adjoints.

Every public function here goes through :func:`apply_primitive`, so it is
recorded on the active tape. Arrays are channels-last (``N, H, W, C``);
convolution kernels are ``KH, KW, C_in, C_out``.
"""
from __future__ import annotations

import builtins

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import Primitive, ShapeError, Tensor, apply_primitive, constant, register_primitive


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(name: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- elementwise binary ------------------------------------------------------

def _add_fwd(attrs, a, b):
    _broadcast_shape("add", a, b)
    return a + b, None


def _add_bwd(attrs, saved, g, a, b):
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def _mul_fwd(attrs, a, b):
    _broadcast_shape("multiply", a, b)
    return a * b, None


def _mul_bwd(attrs, saved, g, a, b):
    return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


# -- matmul --------------------------------------------------------------------

def _matmul_fwd(attrs, a, b):
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    return np.matmul(a, b), None


def _matmul_bwd(attrs, saved, g, a, b):
    ga = np.matmul(g, np.swapaxes(b, -1, -2))
    if b.ndim == 2:
        # fold the batch axes into one GEMM instead of summing per-batch products
        gb = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
    else:
        gb = _unbroadcast(np.matmul(np.swapaxes(a, -1, -2), g), b.shape)
    return _unbroadcast(ga, a.shape), gb


# -- unary ---------------------------------------------------------------------

def _tanh_fwd(attrs, x):
    y = np.tanh(x)
    return y, y


def _tanh_bwd(attrs, y, g, x):
    return (g * (1.0 - y * y),)


def _sigmoid_fwd(attrs, x):
    y = 0.5 * (np.tanh(0.5 * x) + 1.0)
    return y, y


def _sigmoid_bwd(attrs, y, g, x):
    return (g * y * (1.0 - y),)


def _relu_fwd(attrs, x):
    return np.maximum(x, 0), None


def _relu_bwd(attrs, saved, g, x):
    return (g * (x > 0),)


def _abs_fwd(attrs, x):
    return np.abs(x), None


def _abs_bwd(attrs, saved, g, x):
    # subgradient 0 at exactly 0
    return (g * np.sign(x),)


# -- softmax / reductions ----------------------------------------------------

def _softmax_fwd(attrs, x):
    axis = attrs["axis"]
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    return y, y


def _softmax_bwd(attrs, y, g, x):
    axis = attrs["axis"]
    return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)


def _sum_fwd(attrs, x):
    return np.asarray(x.sum(axis=attrs["axis"], keepdims=attrs["keepdims"])), None


def _sum_bwd(attrs, saved, g, x):
    axis, keepdims = attrs["axis"], attrs["keepdims"]
    if axis is None:
        return (np.broadcast_to(g.reshape((1,) * x.ndim), x.shape).copy(),)
    if not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(a % x.ndim for a in axes)
        g = np.expand_dims(g, axes)
    return (np.broadcast_to(g, x.shape).copy(),)


# -- structural ------------------------------------------------------------------

def _reshape_fwd(attrs, x):
    shape = attrs["shape"]
    try:
        return x.reshape(shape), None
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {shape}") from None


def _reshape_bwd(attrs, saved, g, x):
    return (g.reshape(x.shape),)


def _concat_fwd(attrs, *xs):
    axis = attrs["axis"]
    try:
        return np.concatenate(xs, axis=axis), None
    except ValueError:
        raise ShapeError(
            "concat: shapes " + ", ".join(str(x.shape) for x in xs) + f" differ off axis {axis}"
        ) from None


def _concat_bwd(attrs, saved, g, *xs):
    axis = attrs["axis"]
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return tuple(np.split(g, bounds, axis=axis))


def _slice_fwd(attrs, x):
    return x[attrs["index"]], None


def _slice_bwd(attrs, saved, g, x):
    out = np.zeros_like(x)
    out[attrs["index"]] = g
    return (out,)


def _dropout_fwd(attrs, x):
    mask, keep = attrs["mask"], attrs["keep"]
    _broadcast_shape("dropout", x, mask)
    scale = np.asarray(mask, dtype=x.dtype) / x.dtype.type(keep)
    return x * scale, scale


def _dropout_bwd(attrs, scale, g, x):
    return (_unbroadcast(g * scale, x.shape),)


# -- convolution -------------------------------------------------------------------

def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """Output size and (before, after) zero padding for "same" convolution."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return out, total // 2, total - total // 2


def _conv_fwd(attrs, x, w):
    s = attrs["stride"]
    if x.ndim != 4 or w.ndim != 4 or x.shape[3] != w.shape[2]:
        raise ShapeError(f"conv2d: input {x.shape} and kernel {w.shape} are incompatible")
    n, h, wd, c = x.shape
    kh, kw, _, o = w.shape
    oh, pt, pb = same_padding(h, kh, s)
    ow, pl, pr = same_padding(wd, kw, s)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::s, ::s][:, :oh, :ow]
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * oh * ow, kh * kw * c)
    out = (cols @ w.reshape(kh * kw * c, o)).reshape(n, oh, ow, o)
    return out, (cols, xp.shape, pt, pl)


def _conv_bwd(attrs, saved, g, x, w):
    s = attrs["stride"]
    cols, xp_shape, pt, pl = saved
    n, h, wd, c = x.shape
    kh, kw, _, o = w.shape
    _, oh, ow, _ = g.shape
    g2 = g.reshape(-1, o)
    gw = (cols.T @ g2).reshape(w.shape)
    gcols = (g2 @ w.reshape(-1, o).T).reshape(n, oh, ow, kh, kw, c)
    gxp = np.zeros(xp_shape, dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            gxp[:, i:i + s * oh:s, j:j + s * ow:s, :] += gcols[:, :, :, i, j, :]
    return gxp[:, pt:pt + h, pl:pl + wd, :], gw


for _p in (
    Primitive("add", _add_fwd, _add_bwd),
    Primitive("multiply", _mul_fwd, _mul_bwd),
    Primitive("matmul", _matmul_fwd, _matmul_bwd),
    Primitive("tanh", _tanh_fwd, _tanh_bwd),
    Primitive("sigmoid", _sigmoid_fwd, _sigmoid_bwd),
    Primitive("relu", _relu_fwd, _relu_bwd, smooth=False),
    Primitive("abs", _abs_fwd, _abs_bwd, smooth=False),
    Primitive("softmax", _softmax_fwd, _softmax_bwd),
    Primitive("reduce_sum", _sum_fwd, _sum_bwd),
    Primitive("reshape", _reshape_fwd, _reshape_bwd),
    Primitive("concat", _concat_fwd, _concat_bwd),
    Primitive("slice", _slice_fwd, _slice_bwd),
    Primitive("dropout", _dropout_fwd, _dropout_bwd),
    Primitive("conv2d", _conv_fwd, _conv_bwd),
):
    register_primitive(_p)


# -- functional API ------------------------------------------------------------------

def _t(x, like: Tensor | None = None) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x, like)


def add(a, b) -> Tensor:
    a = _t(a, b if isinstance(b, Tensor) else None)
    return apply_primitive("add", a, _t(b, a))


def multiply(a, b) -> Tensor:
    a = _t(a, b if isinstance(b, Tensor) else None)
    return apply_primitive("multiply", a, _t(b, a))


def subtract(a, b) -> Tensor:
    a = _t(a, b if isinstance(b, Tensor) else None)
    return add(a, multiply(_t(b, a), -1.0))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return apply_primitive("matmul", a, b)


def tanh(x: Tensor) -> Tensor:
    return apply_primitive("tanh", x)


def sigmoid(x: Tensor) -> Tensor:
    return apply_primitive("sigmoid", x)


def relu(x: Tensor) -> Tensor:
    return apply_primitive("relu", x)


def abs(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return apply_primitive("abs", x)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return apply_primitive("softmax", x, axis=axis)


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if isinstance(axis, list):
        axis = tuple(axis)
    return apply_primitive("reduce_sum", x, axis=axis, keepdims=keepdims)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = range(x.ndim) if axis is None else ((axis,) if isinstance(axis, int) else axis)
    count = int(np.prod([x.shape[a] for a in axes]))
    return multiply(reduce_sum(x, axis, keepdims), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    return apply_primitive("reshape", x, shape=tuple(shape))


def concat(xs, axis: int = -1) -> Tensor:
    return apply_primitive("concat", *xs, axis=axis)


def slice(x: Tensor, index) -> Tensor:  # noqa: A001
    if not isinstance(index, tuple):
        index = (index,)
    for item in index:
        if not isinstance(item, (int, np.integer, builtins.slice, type(Ellipsis))):
            raise TypeError(f"slice supports basic indexing only, got {type(item).__name__}")
    return apply_primitive("slice", x, index=index)


def dropout(x: Tensor, mask: np.ndarray, keep: float) -> Tensor:
    """Inverted dropout with an explicit keep ``mask``."""
    return apply_primitive("dropout", x, mask=np.asarray(mask, dtype=bool), keep=float(keep))


def conv2d(x: Tensor, w: Tensor, stride: int = 1) -> Tensor:
    """Cross-correlation with zero "same" padding; accepts HWC or NHWC input."""
    if x.ndim == 3:
        out = apply_primitive("conv2d", reshape(x, (1,) + x.shape), w, stride=int(stride))
        return reshape(out, out.shape[1:])
    return apply_primitive("conv2d", x, w, stride=int(stride))
