"""Differentiable operations on :class:`~attnlut.tensor.Tensor`.

Only the operations the enhancement network needs are provided. Elementwise
binary operations require equal shapes (or a python scalar operand); the one
broadcast that exists is the affine map over the last axis in :func:`linear`.
"""
from __future__ import annotations

import numbers

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import NonFiniteError, ShapeError, Tensor, as_tensor, record


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ (no broadcasting)")


# elementwise --------------------------------------------------------------

def add(a, b) -> Tensor:
    a = as_tensor(a)
    if isinstance(b, numbers.Real):
        return record(a.data + b, (a,), lambda g: (g,))
    b = as_tensor(b)
    _check_same(a, b, "add")
    return record(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a = as_tensor(a)
    if isinstance(b, numbers.Real):
        return record(a.data - b, (a,), lambda g: (g,))
    b = as_tensor(b)
    _check_same(a, b, "sub")
    return record(a.data - b.data, (a, b), lambda g: (g, -g))


def neg(a: Tensor) -> Tensor:
    return record(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    if isinstance(b, numbers.Real):
        s = float(b)
        return record(a.data * s, (a,), lambda g: (g * s,))
    b = as_tensor(b)
    _check_same(a, b, "mul")
    ad, bd = a.data, b.data
    return record(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return record(ad * ad, (a,), lambda g: (2.0 * ad * g,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    """Elementwise ``max(x, slope * x)``; the derivative at 0 is ``slope``."""
    if not 0.0 <= slope < 1.0:
        raise ValueError(f"leaky_relu slope must lie in [0, 1), got {slope}")
    xd = x.data
    positive = xd > 0
    out = np.where(positive, xd, slope * xd)

    def backward(g):
        return (np.where(positive, g, slope * g),)

    return record(out, (x,), backward)


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, 0.0)


# reductions and shape ------------------------------------------------------

def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape, dtype = x.shape, x.dtype
    return record(np.asarray(x.data.sum()), (x,), lambda g: (np.full(shape, g, dtype=dtype),))


def mean(x: Tensor) -> Tensor:
    shape, dtype, n = x.shape, x.dtype, x.size
    return record(np.asarray(x.data.mean()), (x,), lambda g: (np.full(shape, g / n, dtype=dtype),))


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return record(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))
    return record(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def getitem(x: Tensor, index) -> Tensor:
    """Basic (slice/int) indexing; advanced indexing is not supported."""
    if isinstance(index, (list, np.ndarray, Tensor)):
        raise TypeError("only basic slicing is supported")
    shape, dtype = x.shape, x.dtype

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        full[index] = g
        return (full,)

    return record(np.array(x.data[index]), (x,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    axis = axis % tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
            t.shape[k] != tensors[0].shape[k] for k in range(t.ndim) if k != axis
        ):
            raise ShapeError(f"concat: incompatible shapes {[u.shape for u in tensors]}")
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return record(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def tile_rows(v: Tensor, rows: int) -> Tensor:
    """Stack ``rows`` copies of a vector into a ``rows x D`` matrix."""
    if v.ndim != 1:
        raise ShapeError(f"tile_rows expects a vector, got shape {v.shape}")
    return record(np.tile(v.data, (rows, 1)), (v,), lambda g: (g.sum(axis=0),))


def axis_diff(x: Tensor, axis: int) -> Tensor:
    """Forward differences ``x[..., i+1, ...] - x[..., i, ...]`` along ``axis``."""
    shape, dtype = x.shape, x.dtype
    axis = axis % x.ndim

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        hi = [slice(None)] * len(shape)
        lo = [slice(None)] * len(shape)
        hi[axis] = slice(1, None)
        lo[axis] = slice(None, -1)
        full[tuple(hi)] += g
        full[tuple(lo)] -= g
        return (full,)

    return record(np.diff(x.data, axis=axis), (x,), backward)


# linear algebra ------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data
    return record(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` over the last axis of ``x``, batched over the rest."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(
            f"linear: input last dim {x.shape[-1]} does not match weight {weight.shape}"
        )
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias shape {bias.shape} != ({weight.shape[0]},)")
    xd, wd = x.data, weight.data
    lead = xd.shape[:-1]
    x2 = xd.reshape(-1, xd.shape[-1])
    out = x2 @ wd.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(lead + (wd.shape[0],))

    def backward(g):
        g2 = g.reshape(-1, wd.shape[0])
        gx = (g2 @ wd).reshape(xd.shape)
        gw = g2.T @ x2
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record(out, inputs, backward)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax of a matrix, stabilised by subtracting each row's max."""
    if x.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got shape {x.shape}")
    if np.isnan(x.data).any():
        raise NonFiniteError("softmax_rows: input contains NaN")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return record(s, (x,), backward)


# convolution ---------------------------------------------------------------

def _conv2d_backward(g, cols, wmat, xp_shape, in_shape, kh, kw, stride, padding):
    """Gradients of conv2d w.r.t. (input, weight, bias)."""
    c_out, h_out, w_out = g.shape
    c_in = in_shape[0]
    g2 = g.reshape(c_out, -1)
    gw = (g2 @ cols).reshape(c_out, c_in, kh, kw)
    gb = g2.sum(axis=1)
    dcols = (g2.T @ wmat).reshape(h_out, w_out, c_in, kh, kw)
    dxp = np.zeros(xp_shape, dtype=g.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + stride * h_out:stride, j:j + stride * w_out:stride] += (
                dcols[:, :, :, i, j].transpose(2, 0, 1)
            )
    gx = dxp[:, padding:padding + in_shape[1], padding:padding + in_shape[2]]
    return np.ascontiguousarray(gx), gw, gb


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of a ``C_in x H x W`` input with ``C_out x C_in x k x k`` kernels."""
    if stride < 1 or padding < 0:
        raise ValueError(f"conv2d: invalid stride={stride} / padding={padding}")
    if x.ndim != 3 or weight.ndim != 4:
        raise ShapeError(f"conv2d: expected 3-D input and 4-D weight, got {x.shape}, {weight.shape}")
    c_out, c_in, kh, kw = weight.shape
    if x.shape[0] != c_in:
        raise ShapeError(f"conv2d: input has {x.shape[0]} channels, weight expects {c_in}")
    if bias.shape != (c_out,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({c_out},)")
    _, h, w = x.shape
    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))
    if xp.shape[1] < kh or xp.shape[2] < kw:
        raise ShapeError(f"conv2d: padded input {xp.shape[1:]} smaller than kernel")
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :h_out, :w_out]
    cols = np.ascontiguousarray(win.transpose(1, 2, 0, 3, 4)).reshape(h_out * w_out, c_in * kh * kw)
    wmat = weight.data.reshape(c_out, -1)
    out = (wmat @ cols.T).reshape(c_out, h_out, w_out) + bias.data[:, None, None]
    xp_shape, in_shape = xp.shape, x.shape

    def backward(g):
        # resolved at call time so tests can inject a broken kernel
        return _conv2d_backward(g, cols, wmat, xp_shape, in_shape, kh, kw, stride, padding)

    return record(out, (x, weight, bias), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel spatial mean of a ``C x H x W`` tensor."""
    if x.ndim != 3:
        raise ShapeError(f"global_avg_pool expects C x H x W, got {x.shape}")
    shape, dtype = x.shape, x.dtype
    count = shape[1] * shape[2]

    def backward(g):
        return (np.broadcast_to((g / count)[:, None, None], shape).astype(dtype),)

    return record(x.data.mean(axis=(1, 2)), (x,), backward)
