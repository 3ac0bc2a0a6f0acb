"""Dense pyramidal Lucas-Kanade optical flow.

Frames are float arrays of shape ``(H, W)`` on the 0-255 scale. The flow
``(u, v)`` at a pixel is the displacement that carries content of ``prev``
to ``next`` (``next(x + u, y + v) ~ prev(x, y)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import map_coordinates

from .errors import DimensionError, FormatError, ParameterError

LUMA = np.array([0.299, 0.587, 0.114])

DEFAULT_WINDOW = 5
DEFAULT_SIGMA = 1.0
DEFAULT_LEVELS = 3
DEFAULT_TAU_EIG = 1e-2
DEFAULT_ITERATIONS = 5
# Largest per-iteration update, in pixels of the current pyramid level.
MAX_STEP = 1.0


@dataclass
class FlowField:
    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        if not (self.u.shape == self.v.shape == self.valid.shape) or self.u.ndim != 2:
            raise DimensionError(
                f"flow components disagree: u{self.u.shape} v{self.v.shape} valid{self.valid.shape}"
            )

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        z = np.zeros((height, width))
        return cls(z, z.copy(), np.zeros((height, width), dtype=bool))

    def __neg__(self) -> "FlowField":
        return FlowField(-self.u, -self.v, self.valid.copy())


def to_grayscale(frame) -> np.ndarray:
    """Luma ``0.299 R + 0.587 G + 0.114 B``; single-channel input passes through."""
    a = np.asarray(frame, dtype=np.float64)
    if a.ndim == 2:
        return a
    if a.ndim == 3 and a.shape[2] == 1:
        return a[..., 0]
    if a.ndim == 3 and a.shape[2] == 3:
        return a @ LUMA
    raise FormatError(f"expected 1 or 3 channels, got frame of shape {a.shape}")


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled, normalized 1-d Gaussian with radius ``ceil(3 sigma)``."""
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _convolve_axis(img: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    r = len(kernel) // 2
    pad = [(0, 0)] * img.ndim
    pad[axis] = (r, r)
    padded = np.pad(img, pad, mode="reflect")
    windows = sliding_window_view(padded, len(kernel), axis=axis)
    return windows @ kernel


def gaussian_smooth(frame: np.ndarray, sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    """Separable Gaussian blur with reflected borders."""
    k = gaussian_kernel(sigma)
    img = np.asarray(frame, dtype=np.float64)
    return _convolve_axis(_convolve_axis(img, k, 1), k, 0)


def _gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.pad(img, 1, mode="reflect")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    return gx, gy


def _box_sum(img: np.ndarray, window: int) -> np.ndarray:
    r = window // 2
    c = np.pad(img, r, mode="reflect").cumsum(0).cumsum(1)
    c = np.pad(c, ((1, 0), (1, 0)))
    return c[window:, window:] - c[:-window, window:] - c[window:, :-window] + c[:-window, :-window]


def _downsample(img: np.ndarray) -> np.ndarray:
    return gaussian_smooth(img, 1.0)[::2, ::2]


def _upsample_flow(f: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    up = 2.0 * np.repeat(np.repeat(f, 2, axis=0), 2, axis=1)
    out = np.pad(up, ((0, max(0, shape[0] - up.shape[0])), (0, max(0, shape[1] - up.shape[1]))), mode="edge")
    return out[: shape[0], : shape[1]]


def _pyramid(img: np.ndarray, levels: int, window: int) -> list[np.ndarray]:
    pyr = [img]
    while len(pyr) < levels and min(pyr[-1].shape) // 2 >= 2 * window:
        pyr.append(_downsample(pyr[-1]))
    return pyr


def _solve_level(a, b, u, v, window, tau_eig, iterations):
    h, w = a.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    ax, ay = _gradients(a)
    ok = np.zeros((h, w), dtype=bool)
    for _ in range(iterations):
        # The spline warp is not exactly the identity at zero displacement.
        moved = u.any() or v.any()
        bw = map_coordinates(b, [ys + v, xs + u], order=3, mode="nearest") if moved else b
        bx, by = _gradients(bw)
        ix, iy = 0.5 * (ax + bx), 0.5 * (ay + by)
        it = bw - a
        sxx = _box_sum(ix * ix, window)
        syy = _box_sum(iy * iy, window)
        sxy = _box_sum(ix * iy, window)
        # Each neighbour's residual is re-linearised about the centre pixel's
        # flow, so the window is effectively warped as a whole.
        rx = _box_sum(ix * (ix * u + iy * v - it), window)
        ry = _box_sum(iy * (ix * u + iy * v - it), window)
        half_tr = 0.5 * (sxx + syy)
        min_eig = half_tr - np.sqrt(np.maximum(0.25 * (sxx - syy) ** 2 + sxy**2, 0.0))
        ok = min_eig >= tau_eig
        det = np.where(ok, sxx * syy - sxy**2, 1.0)
        du = np.where(ok, (syy * rx - sxy * ry) / det - u, 0.0)
        dv = np.where(ok, (sxx * ry - sxy * rx) / det - v, 0.0)
        step = np.hypot(du, dv)
        shrink = np.minimum(1.0, MAX_STEP / np.maximum(step, 1e-12))
        du *= shrink
        dv *= shrink
        u = u + du
        v = v + dv
        if np.abs(du).max(initial=0.0) < 1e-3 and np.abs(dv).max(initial=0.0) < 1e-3:
            break
    return u, v, ok


def lucas_kanade_flow(
    prev: np.ndarray,
    next: np.ndarray,
    window: int = DEFAULT_WINDOW,
    sigma: float = DEFAULT_SIGMA,
    levels: int = DEFAULT_LEVELS,
    tau_eig: float = DEFAULT_TAU_EIG,
    iterations: int = DEFAULT_ITERATIONS,
) -> FlowField:
    """Windowed least-squares flow, refined coarse to fine.

    Both frames are Gaussian-smoothed first. At each pyramid level the
    2x2 normal equations are solved per pixel on central-difference
    gradients; pixels whose structure tensor has smallest eigenvalue below
    ``tau_eig`` are invalid and carry zero flow in the result.
    """
    prev = np.asarray(prev, dtype=np.float64)
    next = np.asarray(next, dtype=np.float64)
    if prev.shape != next.shape or prev.ndim != 2:
        raise DimensionError(f"frame shapes differ or are not 2-d: {prev.shape} vs {next.shape}")
    if window < 3 or window % 2 == 0:
        raise ParameterError(f"window must be odd and >= 3, got {window}")
    if levels < 1:
        raise ParameterError(f"levels must be >= 1, got {levels}")
    if iterations < 1:
        raise ParameterError(f"iterations must be >= 1, got {iterations}")

    # The eigenvalue test is done on the [0, 1] intensity scale; flow itself is scale-free.
    pa = _pyramid(gaussian_smooth(prev / 255.0, sigma), levels, window)
    pb = _pyramid(gaussian_smooth(next / 255.0, sigma), levels, window)
    u = np.zeros(pa[-1].shape)
    v = np.zeros(pa[-1].shape)
    ok = np.zeros(pa[-1].shape, dtype=bool)
    for lvl in range(len(pa) - 1, -1, -1):
        if u.shape != pa[lvl].shape:
            u = _upsample_flow(u, pa[lvl].shape)
            v = _upsample_flow(v, pa[lvl].shape)
        u, v, ok = _solve_level(pa[lvl], pb[lvl], u, v, window, tau_eig, iterations)
    u = np.where(ok, u, 0.0)
    v = np.where(ok, v, 0.0)
    return FlowField(u, v, ok)


def flow_magnitude(flow: FlowField, eps_s: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel flow length and the foreground mask ``valid & (mag > eps_s)``."""
    if eps_s < 0:
        raise ParameterError(f"eps_s must be non-negative, got {eps_s}")
    mag = np.hypot(flow.u, flow.v)
    return mag, flow.valid & (mag > eps_s)
