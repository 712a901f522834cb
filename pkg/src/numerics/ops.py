"""
Differentiable primitives.

The supported set spans the toy UNet, the two visual encoders and both
losses: conv2d (odd square kernels, stride 1 or 2, zero same-padding),
nearest 2x upsample, dense, group normalization, SiLU, broadcasting add,
channel concatenation, scalar scale and mean-squared error. ``reshape``,
``spatial_broadcast`` and ``embedding_mean`` are layout helpers needed by the
time embedding and the text tables.

All image tensors are NCHW.
"""

from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from src.core.exceptions import ShapeMismatchError, UnsupportedOpError
from src.numerics.tensor import Tensor, record

GROUP_NORM_EPS = 1e-5


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride: int = 1) -> Tensor:
    """
    2-D cross-correlation with zero same-padding.

    Args:
        x: Input (N, C, H, W)
        w: Kernel (O, C, k, k), k odd
        b: Optional bias (O,)
        stride: 1 or 2

    Returns:
        Tensor: Output (N, O, ceil(H/stride), ceil(W/stride))
    """
    if stride not in (1, 2):
        raise UnsupportedOpError(f"conv2d(stride={stride})")
    if (
        x.ndim != 4
        or w.ndim != 4
        or x.shape[1] != w.shape[1]
        or w.shape[2] != w.shape[3]
        or w.shape[2] % 2 == 0
    ):
        raise ShapeMismatchError("conv2d", [x.shape, w.shape])
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeMismatchError("conv2d", [w.shape, b.shape], "bias")

    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    pad = k // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1

    windows = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    wmat = w.data.reshape(o, c * k * k)
    out = cols @ wmat.T
    if b is not None:
        out = out + b.data
    out = np.ascontiguousarray(out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2))

    def backward(grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        gmat = grad.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        gw = (gmat.T @ cols).reshape(w.shape)
        gb = gmat.sum(axis=0) if b is not None else None
        gcols = (gmat @ wmat).reshape(n, ho, wo, c, k, k)
        gxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[
                    :, :, :, :, i, j
                ].transpose(0, 3, 1, 2)
        gx = gxp[:, :, pad : pad + h, pad : pad + wd] if pad else gxp
        return (gx, gw, gb) if b is not None else (gx, gw)

    inputs = (x, w, b) if b is not None else (x, w)
    return record("conv2d", inputs, out, backward)


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x spatial upsampling of an NCHW tensor."""
    if x.ndim != 4:
        raise ShapeMismatchError("upsample2x", [x.shape])
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def backward(grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return record("upsample2x", (x,), out, backward)


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """Dense layer: x (N, I), w (O, I), b (O,) -> (N, O)."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeMismatchError("linear", [x.shape, w.shape])
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeMismatchError("linear", [w.shape, b.shape], "bias")
    out = x.data @ w.data.T
    if b is not None:
        out = out + b.data

    def backward(grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        gx = grad @ w.data
        gw = grad.T @ x.data
        if b is None:
            return gx, gw
        return gx, gw, grad.sum(axis=0)

    inputs = (x, w, b) if b is not None else (x, w)
    return record("linear", inputs, out, backward)


def group_norm(x: Tensor, gamma: Tensor, beta: Tensor, groups: int = 8) -> Tensor:
    """Group normalization with per-channel affine over an NCHW tensor."""
    if x.ndim != 4 or x.shape[1] % groups != 0:
        raise ShapeMismatchError("group_norm", [x.shape], f"groups={groups}")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeMismatchError("group_norm", [x.shape, gamma.shape, beta.shape], "affine")

    xg = x.data.reshape(n, groups, -1)
    mean = xg.mean(axis=-1, keepdims=True)
    var = xg.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + GROUP_NORM_EPS)
    xhat = ((xg - mean) * inv).reshape(x.shape)
    g4 = gamma.data.reshape(1, c, 1, 1)
    out = xhat * g4 + beta.data.reshape(1, c, 1, 1)

    def backward(grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        ggamma = (grad * xhat).sum(axis=(0, 2, 3))
        gbeta = grad.sum(axis=(0, 2, 3))
        gh = (grad * g4).reshape(n, groups, -1)
        xh = xhat.reshape(n, groups, -1)
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xh * (gh * xh).mean(axis=-1, keepdims=True))
        return gx.reshape(x.shape), ggamma, gbeta

    return record("group_norm", (x, gamma, beta), out, backward)


def silu(x: Tensor) -> Tensor:
    """x * sigmoid(x)."""
    s = expit(x.data)
    out = x.data * s

    def backward(grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad * (s * (1.0 + x.data * (1.0 - s))),)

    return record("silu", (x,), out, backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum with numpy broadcasting."""
    try:
        out = a.data + b.data
    except ValueError as e:
        raise ShapeMismatchError("add", [a.shape, b.shape]) from e

    def backward(grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return record("add", (a, b), out, backward)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    """Concatenate along the channel axis."""
    if not tensors:
        raise ShapeMismatchError("concat", [], "no operands")
    reference = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(reference) or any(
            a != b for i, (a, b) in enumerate(zip(t.shape, reference)) if i != axis
        ):
            raise ShapeMismatchError("concat", [x.shape for x in tensors])
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return tuple(np.split(grad, bounds, axis=axis))

    return record("concat", tuple(tensors), out, backward)


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a Python scalar."""
    factor = float(factor)
    out = factor * x.data

    def backward(grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (factor * grad,)

    return record("scale", (x,), out, backward)


def mse(pred: Tensor, target: Tensor) -> Tensor:
    """Mean of squared residuals; returns a 0-d tensor."""
    if pred.shape != target.shape:
        raise ShapeMismatchError("mse", [pred.shape, target.shape])
    diff = pred.data - target.data
    out = np.asarray(np.mean(diff * diff), dtype=diff.dtype)
    count = diff.size

    def backward(grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        g = (2.0 / count) * grad * diff
        return g, -g

    return record("mse", (pred, target), out, backward)


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    """Row-major reshape."""
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeMismatchError("reshape", [x.shape, shape]) from e
    original = x.shape

    def backward(grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad.reshape(original),)

    return record("reshape", (x,), out, backward)


def spatial_broadcast(v: Tensor, height: int, width: int) -> Tensor:
    """Tile a (N, D) vector over an H x W grid -> (N, D, H, W)."""
    if v.ndim != 2:
        raise ShapeMismatchError("spatial_broadcast", [v.shape])
    n, d = v.shape
    out = np.ascontiguousarray(np.broadcast_to(v.data[:, :, None, None], (n, d, height, width)))

    def backward(grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (grad.sum(axis=(2, 3)),)

    return record("spatial_broadcast", (v,), out, backward)


def embedding_mean(table: Tensor, ids: Sequence[Sequence[int]]) -> Tensor:
    """
    Row means of an embedding table, one output row per id list.

    An empty id list yields a zero row.
    """
    if table.ndim != 2:
        raise ShapeMismatchError("embedding_mean", [table.shape])
    vocab, dim = table.shape
    out = np.zeros((len(ids), dim), dtype=table.data.dtype)
    for row, token_ids in enumerate(ids):
        if any(not 0 <= i < vocab for i in token_ids):
            raise ShapeMismatchError("embedding_mean", [table.shape], f"ids {list(token_ids)}")
        if token_ids:
            out[row] = table.data[list(token_ids)].mean(axis=0)

    def backward(grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        gtable = np.zeros_like(table.data)
        for row, token_ids in enumerate(ids):
            if token_ids:
                np.add.at(gtable, list(token_ids), grad[row] / len(token_ids))
        return (gtable,)

    return record("embedding_mean", (table,), out, backward)

