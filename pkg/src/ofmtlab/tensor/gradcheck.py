"""Central finite-difference audit of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    checked: int
    worst: tuple[int, tuple[int, ...]] | None = None
    errors: list[float] = field(default_factory=list)

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error <= tol


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    n_coords: int = 50,
    h: float = 1e-4,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare backward() against central differences on random coordinates.

    ``loss_fn`` must rebuild the graph from the current tensor values on
    every call and be deterministic (no train-mode dropout). Coordinates are
    drawn uniformly over the concatenation of all ``tensors``.
    """
    rng = rng or np.random.default_rng(0)
    for t in tensors:
        t.grad = None
    loss_fn().backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    sizes = np.array([t.size for t in tensors])
    flat = rng.choice(int(sizes.sum()), size=min(n_coords, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    errors, worst, worst_err = [], None, -1.0
    for k in sorted(flat):
        ti = int(np.searchsorted(offsets, k, side="right") - 1)
        t = tensors[ti]
        idx = np.unravel_index(int(k - offsets[ti]), t.shape)
        orig = t.data[idx]
        t.data[idx] = orig + h
        f_plus = float(loss_fn().data)
        t.data[idx] = orig - h
        f_minus = float(loss_fn().data)
        t.data[idx] = orig
        numeric = (f_plus - f_minus) / (2 * h)
        err = relative_error(float(analytic[ti][idx]), numeric)
        errors.append(err)
        if err > worst_err:
            worst_err, worst = err, (ti, tuple(int(i) for i in idx))
    return GradCheckReport(max(errors, default=0.0), len(errors), worst, errors)


def _layer_cases(rng: np.random.Generator):
    """(name, loss builder, tensors) for every differentiable layer type."""
    from . import ops
    from .layers import LayerParams

    def param(name, shape):
        return LayerParams.glorot(name, shape, rng, dtype=np.float64)

    def leaf(*shape):
        return Tensor(rng.normal(size=shape), requires_grad=True, dtype=np.float64)

    def head(z):
        # A fixed random projection keeps every output coordinate in the loss.
        proj = Tensor(np.random.default_rng(99).normal(size=z.shape), dtype=np.float64)
        flat = ops.reshape(z, (-1,))
        return ops.dense_forward(ops.reshape(flat, (1, -1)),
                                 LayerParams(ops.reshape(proj, (1, -1)), Tensor(np.zeros(1)), "head"))

    def scalar(z):
        return ops.reshape(head(z), ())

    cases = []
    x2, p2 = leaf(2, 2, 7, 7), param("conv2d", (3, 2, 3, 3))
    cases.append(("conv2d", lambda: scalar(ops.conv2d_forward(x2, p2, padding="valid")), [x2, *p2.tensors()]))
    x2s = leaf(1, 2, 8, 8)
    p2s = param("conv2d_strided", (2, 2, 3, 3))
    cases.append(("conv2d_stride2_same", lambda: scalar(ops.conv2d_forward(x2s, p2s, stride=2, padding="same")),
                  [x2s, *p2s.tensors()]))
    x3, p3 = leaf(2, 2, 4, 5, 5), param("conv3d", (3, 2, 3, 3, 3))
    cases.append(("conv3d", lambda: scalar(ops.conv3d_forward(x3, p3, padding="same")), [x3, *p3.tensors()]))
    xp = leaf(2, 3, 4, 6, 6)
    cases.append(("maxpool3d", lambda: scalar(ops.maxpool_forward(xp, (2, 2, 2))), [xp]))
    xq = leaf(2, 3, 7, 7)
    cases.append(("maxpool2d_overlap", lambda: scalar(ops.maxpool_forward(xq, (3, 3), (2, 2))), [xq]))
    xd, pd = leaf(4, 6), param("dense", (5, 6))
    cases.append(("dense", lambda: scalar(ops.dense_forward(xd, pd)), [xd, *pd.tensors()]))
    xr = leaf(5, 12)
    cases.append(("relu", lambda: scalar(ops.relu(xr)), [xr]))
    xo = leaf(5, 12)
    cases.append(("dropout", lambda: scalar(ops.dropout(xo, 0.4, True, np.random.default_rng(5))), [xo]))
    xf = leaf(3, 4, 5)
    cases.append(("flatten", lambda: scalar(ops.flatten(xf)), [xf]))
    xs = leaf(5, 10)
    target = rng.integers(0, 10, size=5)
    cases.append(("softmax_crossentropy", lambda: ops.softmax_crossentropy(xs, target)[1], [xs]))
    return cases


def audit_layers(n_coords: int = 50, seed: int = 0) -> dict[str, GradCheckReport]:
    """Gradient-check every layer type in float64 on ``n_coords`` coordinates each."""
    from .core import precision

    rng = np.random.default_rng(seed)
    with precision(np.float64):
        return {name: check_gradients(fn, ts, n_coords, 1e-5, np.random.default_rng([seed, i]))
                for i, (name, fn, ts) in enumerate(_layer_cases(rng))}
