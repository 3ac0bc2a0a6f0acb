"""Differentiable layer operations.

Convolution and pooling take channel-first inputs, ``(C, *spatial)`` or
batched ``(B, C, *spatial)``; the number of spatial axes is implied by the
kernel (2 for images, 3 for ``T x H x W`` clips).
"""

from __future__ import annotations

import itertools
import math
from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError, ParameterError
from .core import Tensor

Padding = Union[str, int, Sequence[int]]


def _tuple(value, n: int, what: str) -> tuple[int, ...]:
    if isinstance(value, (int, np.integer)):
        out = (int(value),) * n
    else:
        out = tuple(int(v) for v in value)
    if len(out) != n:
        raise DimensionError(f"{what} needs {n} entries, got {value!r}")
    return out


def _pad_widths(padding: Padding, kernel: tuple[int, ...]) -> list[tuple[int, int]]:
    if isinstance(padding, str):
        if padding == "valid":
            return [(0, 0)] * len(kernel)
        if padding == "same":
            return [((k - 1) // 2, k - 1 - (k - 1) // 2) for k in kernel]
        raise ParameterError(f"unknown padding mode {padding!r}")
    return [(p, p) for p in _tuple(padding, len(kernel), "padding")]


def _window_slices(offset, stride, out_shape):
    return tuple(slice(o, o + s * (n - 1) + 1, s) for o, s, n in zip(offset, stride, out_shape))


def conv_forward(x: Tensor, params, stride=1, padding: Padding = "valid") -> Tensor:
    """N-d cross-correlation via im2col and a single matrix product.

    ``params.weights`` has shape ``(C_out, C_in, *kernel)``. Output extents
    follow ``floor((in + 2p - k) / s) + 1`` per spatial axis.
    """
    w, b = params.weights, params.bias
    nd = w.ndim - 2
    if x.ndim not in (nd + 1, nd + 2):
        raise DimensionError(
            f"{params.name}: expected input of rank {nd + 1} or {nd + 2}, got shape {x.shape}"
        )
    batched = x.ndim == nd + 2
    xd = x.data if batched else x.data[None]
    B, C = xd.shape[:2]
    c_out, c_in = w.shape[:2]
    kernel = w.shape[2:]
    if C != c_in:
        raise DimensionError(f"{params.name}: input has {C} channels, kernel expects {c_in}")
    stride = _tuple(stride, nd, "stride")
    if min(stride) < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    pads = _pad_widths(padding, kernel)
    padded = tuple(n + lo + hi for n, (lo, hi) in zip(xd.shape[2:], pads))
    for axis, (n, k) in enumerate(zip(padded, kernel)):
        if k > n:
            raise DimensionError(
                f"{params.name}: kernel extent {k} exceeds padded input extent {n} on spatial axis {axis}"
            )
    out_shape = tuple((n - k) // s + 1 for n, k, s in zip(padded, kernel, stride))

    xp = np.pad(xd, [(0, 0), (0, 0)] + pads) if any(lo or hi for lo, hi in pads) else xd
    xcb = xp.transpose(1, 0, *range(2, nd + 2))
    cols = np.empty((C, *kernel, B, *out_shape), dtype=xd.dtype)
    offsets = list(itertools.product(*(range(k) for k in kernel)))
    for off in offsets:
        cols[(slice(None), *off)] = xcb[(slice(None), slice(None), *_window_slices(off, stride, out_shape))]
    cm = cols.reshape(C * math.prod(kernel), B * math.prod(out_shape))
    wm = w.data.reshape(c_out, -1)
    y = wm @ cm
    y += b.data[:, None]
    out = np.ascontiguousarray(y.reshape(c_out, B, *out_shape).swapaxes(0, 1))
    if not batched:
        out = out[0]

    def backward(g):
        g = g if batched else g[None]
        gm = g.swapaxes(0, 1).reshape(c_out, -1)
        dw = (gm @ cm.T).reshape(w.shape) if w.requires_grad else None
        db = gm.sum(axis=1) if b.requires_grad else None
        dx = None
        if x.requires_grad:
            dcols = (wm.T @ gm).reshape(cols.shape)
            dxp = np.zeros((C, B, *padded), dtype=xd.dtype)
            for off in offsets:
                dxp[(slice(None), slice(None), *_window_slices(off, stride, out_shape))] += dcols[(slice(None), *off)]
            crop = tuple(slice(lo, lo + n) for (lo, _), n in zip(pads, xd.shape[2:]))
            dx = np.ascontiguousarray(dxp[(slice(None), slice(None), *crop)].swapaxes(0, 1))
            if not batched:
                dx = dx[0]
        return dx, dw, db

    return Tensor._from_op(out, (x, w, b), backward)


def conv2d_forward(x: Tensor, params, stride=(1, 1), padding: Padding = "valid") -> Tensor:
    if params.weights.ndim != 4:
        raise DimensionError(f"{params.name}: conv2d needs a 4-d kernel, got {params.weights.shape}")
    return conv_forward(x, params, stride, padding)


def conv3d_forward(x: Tensor, params, stride=(1, 1, 1), padding: Padding = "valid") -> Tensor:
    if params.weights.ndim != 5:
        raise DimensionError(f"{params.name}: conv3d needs a 5-d kernel, got {params.weights.shape}")
    return conv_forward(x, params, stride, padding)


def maxpool_forward(x: Tensor, window: Sequence[int], stride: Optional[Sequence[int]] = None) -> Tensor:
    """Max pooling over the trailing ``len(window)`` axes.

    The gradient goes to the first maximum in scan order of each window.
    """
    nd = len(window)
    window = _tuple(window, nd, "window")
    stride = window if stride is None else _tuple(stride, nd, "stride")
    if min(window) < 1 or min(stride) < 1:
        raise ParameterError(f"pool window and stride must be >= 1, got {window}, {stride}")
    if x.ndim < nd:
        raise DimensionError(f"pool window {window} has more axes than input {x.shape}")
    lead = x.shape[: x.ndim - nd]
    spatial = x.shape[x.ndim - nd :]
    for n, k in zip(spatial, window):
        if k > n:
            raise DimensionError(f"pool window {window} larger than input extents {spatial}")
    out_shape = tuple((n - k) // s + 1 for n, k, s in zip(spatial, window, stride))
    xd = x.data
    kprod = math.prod(window)

    if stride == window:
        # Non-overlapping windows: one strided view per window offset. A strict
        # ">" keeps the first maximum in scan order.
        offsets = list(itertools.product(*(range(k) for k in window)))

        def view(off):
            return (Ellipsis, *(slice(o, o + k * n, k) for o, k, n in zip(off, window, out_shape)))

        out = xd[view(offsets[0])].copy()
        idx = np.zeros(out.shape, dtype=np.int16)
        for j, off in enumerate(offsets[1:], 1):
            cur = xd[view(off)]
            better = cur > out
            np.copyto(out, cur, where=better)
            idx[better] = j

        def backward(g):
            dx = np.zeros_like(xd)
            for j, off in enumerate(offsets):
                dx[view(off)] = np.where(idx == j, g, 0)
            return (dx,)

        return Tensor._from_op(out, (x,), backward)

    axes = tuple(range(x.ndim - nd, x.ndim))
    view = sliding_window_view(xd, window, axis=axes)
    view = view[(Ellipsis, *(slice(None, None, s) for s in stride), *(slice(None),) * nd)]
    flat = view.reshape(*lead, *out_shape, kprod)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        koff = np.unravel_index(idx, window)
        grids = np.indices(idx.shape, sparse=True)
        nl = len(lead)
        pos = list(grids[:nl]) + [grids[nl + i] * stride[i] + koff[i] for i in range(nd)]
        dx = np.zeros_like(xd)
        np.add.at(dx, tuple(pos), g)
        return (dx,)

    return Tensor._from_op(np.ascontiguousarray(out), (x,), backward)


def dense_forward(x: Tensor, params) -> Tensor:
    """Affine map ``x @ W.T + b`` with ``W`` of shape ``(out, in)``."""
    w, b = params.weights, params.bias
    if x.shape[-1] != w.shape[1] or x.ndim not in (1, 2):
        raise DimensionError(f"{params.name}: input shape {x.shape} does not match weights {w.shape}")
    out = x.data @ w.data.T + b.data

    def backward(g):
        g2 = g if g.ndim == 2 else g[None]
        x2 = x.data if x.ndim == 2 else x.data[None]
        dw = g2.T @ x2 if w.requires_grad else None
        db = g2.sum(axis=0) if b.requires_grad else None
        dx = g @ w.data if x.requires_grad else None
        return dx, dw, db

    return Tensor._from_op(out, (x, w, b), backward)


def relu(x: Tensor) -> Tensor:
    active = x.data > 0
    out = np.where(active, x.data, 0).astype(x.dtype, copy=False)
    return Tensor._from_op(out, (x,), lambda g: (g * active,))


def dropout(x: Tensor, rate: float, train: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)`` at train time."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ParameterError("train-mode dropout needs a seeded generator")
    keep = rng.random(x.shape) >= rate
    scale = np.where(keep, 1.0 / (1.0 - rate), 0.0).astype(x.dtype)
    return Tensor._from_op(x.data * scale, (x,), lambda g: (g * scale,))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    return Tensor._from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def flatten(x: Tensor, batched: bool = True) -> Tensor:
    return reshape(x, (x.shape[0], -1) if batched else (-1,))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_crossentropy(logits: Tensor, target, reduction: str = "sum"):
    """Softmax probabilities and cross-entropy loss.

    ``logits`` is ``(N,)`` or ``(M, N)``; ``target`` holds class indices.
    The loss is summed over samples unless ``reduction="mean"``.

    Returns
    -------
    probs : ndarray
        Softmax of the logits, same shape.
    loss : Tensor
        Scalar loss node.
    """
    single = logits.ndim == 1
    z = logits.data[None] if single else logits.data
    if z.ndim != 2:
        raise DimensionError(f"logits must be (N,) or (M, N), got {logits.shape}")
    m, n = z.shape
    if n < 2:
        raise DimensionError(f"need at least 2 classes, got {n}")
    t = np.atleast_1d(np.asarray(target, dtype=np.int64))
    if t.shape != (m,):
        raise DimensionError(f"expected {m} targets, got shape {t.shape}")
    if (t < 0).any() or (t >= n).any():
        raise IndexError(f"target index out of range for {n} classes: {t.tolist()}")
    if reduction not in ("sum", "mean"):
        raise ParameterError(f"unknown reduction {reduction!r}")

    shift = z.max(axis=1, keepdims=True)
    lse = shift[:, 0] + np.log(np.exp(z - shift).sum(axis=1))
    rows = np.arange(m)
    per_sample = lse - z[rows, t]
    scale = 1.0 / m if reduction == "mean" else 1.0
    loss_val = np.asarray(per_sample.sum() * scale, dtype=logits.dtype)
    probs = np.exp(z - lse[:, None])

    def backward(g):
        d = probs.copy()
        d[rows, t] -= 1.0
        d *= g * scale
        return (d[0] if single else d,)

    loss = Tensor._from_op(loss_val, (logits,), backward)
    return (probs[0] if single else probs), loss
