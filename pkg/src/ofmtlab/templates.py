"""Single-image motion encodings: MEI, MHI and the optical-flow guided OFMT.

MEI and MHI work on binary frame-difference masks. OFMT accumulates the
length of foreground optical-flow vectors, each weighted by ``lambda_fg``;
flow shorter than ``eps_s`` counts as background and contributes nothing.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image

from .errors import DimensionError, FormatError, ParameterError
from .flow import (
    DEFAULT_ITERATIONS,
    DEFAULT_LEVELS,
    DEFAULT_SIGMA,
    DEFAULT_TAU_EIG,
    DEFAULT_WINDOW,
    FlowField,
    flow_magnitude,
    lucas_kanade_flow,
    to_grayscale,
)

TEMPLATE_FPS = 30.0
OFMT_MODES = ("additive", "union")


@dataclass
class MotionTemplate:
    kind: str
    values: np.ndarray
    tau: int
    decay: Optional[float] = None
    lambda_fg: Optional[float] = None
    eps_s: Optional[float] = None

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class TemplateParams:
    """Everything that determines an OFMT image from a clip."""

    xi: float = 25.0
    eps_s: float = 1.0
    lambda_fg: float = 5.0
    sigma: float = DEFAULT_SIGMA
    window: int = DEFAULT_WINDOW
    levels: int = DEFAULT_LEVELS
    tau_eig: float = DEFAULT_TAU_EIG
    iterations: int = DEFAULT_ITERATIONS
    mode: str = "additive"
    fps: float = TEMPLATE_FPS

    def __post_init__(self):
        if self.mode not in OFMT_MODES:
            raise ParameterError(f"OFMT mode must be one of {OFMT_MODES}, got {self.mode!r}")
        if self.eps_s < 0 or self.lambda_fg < 0 or self.xi < 0:
            raise ParameterError("xi, eps_s and lambda_fg must be non-negative")

    def flow_kwargs(self) -> dict:
        return dict(window=self.window, sigma=self.sigma, levels=self.levels,
                    tau_eig=self.tau_eig, iterations=self.iterations)

    def to_dict(self) -> dict:
        return asdict(self)


def binarize_diff(prev: np.ndarray, cur: np.ndarray, xi: float = 25.0) -> np.ndarray:
    """Motion mask ``|cur - prev| > xi``."""
    if xi < 0:
        raise ParameterError(f"xi must be non-negative, got {xi}")
    prev = np.asarray(prev, dtype=np.float64)
    cur = np.asarray(cur, dtype=np.float64)
    if prev.shape != cur.shape:
        raise DimensionError(f"frame shapes differ: {prev.shape} vs {cur.shape}")
    return np.abs(cur - prev) > xi


def difference_masks(frames: Sequence[np.ndarray], xi: float = 25.0) -> list[np.ndarray]:
    gray = [to_grayscale(f) for f in frames]
    return [binarize_diff(a, b, xi) for a, b in zip(gray, gray[1:])]


def _check_masks(masks) -> list[np.ndarray]:
    masks = [np.asarray(m, dtype=bool) for m in masks]
    if not masks:
        raise ParameterError("mask sequence is empty")
    if any(m.shape != masks[0].shape for m in masks):
        raise DimensionError("masks differ in size")
    return masks


def compute_mei(masks: Sequence[np.ndarray], tau: Optional[int] = None) -> MotionTemplate:
    """Union of the last ``tau`` masks (all of them by default)."""
    masks = _check_masks(masks)
    tau = len(masks) if tau is None else int(tau)
    if not 1 <= tau <= len(masks):
        raise ParameterError(f"tau must be in [1, {len(masks)}], got {tau}")
    values = np.logical_or.reduce(masks[-tau:]).astype(np.float64)
    return MotionTemplate("MEI", values, tau)


def compute_mhi(masks: Sequence[np.ndarray], tau: Optional[int] = None, decay: float = 1.0) -> MotionTemplate:
    """Recency map: ``tau`` where motion occurs, else decays by ``decay`` per frame."""
    masks = _check_masks(masks)
    tau = len(masks) if tau is None else int(tau)
    if tau < 1:
        raise ParameterError(f"tau must be >= 1, got {tau}")
    if decay <= 0:
        raise ParameterError(f"decay must be positive, got {decay}")
    h = np.zeros(masks[0].shape)
    for m in masks:
        h = np.where(m, float(tau), np.maximum(0.0, h - decay))
    return MotionTemplate("MHI", h, tau, decay=decay)


class OFMTAccumulator:
    """Streaming OFMT: feed flow fields one at a time with :meth:`update`."""

    def __init__(self, lambda_fg: float = 5.0, eps_s: float = 1.0, mode: str = "additive"):
        if mode not in OFMT_MODES:
            raise ParameterError(f"OFMT mode must be one of {OFMT_MODES}, got {mode!r}")
        self.lambda_fg = lambda_fg
        self.eps_s = eps_s
        self.mode = mode
        self.values: Optional[np.ndarray] = None
        self.frames = 0

    def update(self, flow: FlowField) -> None:
        mag, fg = flow_magnitude(flow, self.eps_s)
        if self.values is None:
            self.values = np.zeros(mag.shape)
        elif self.values.shape != mag.shape:
            raise DimensionError(f"flow size {mag.shape} differs from earlier {self.values.shape}")
        if self.mode == "additive":
            self.values += np.where(fg, self.lambda_fg * mag, 0.0)
        else:
            self.values = np.where(fg, self.lambda_fg, self.values)
        self.frames += 1

    def template(self) -> MotionTemplate:
        if self.values is None:
            raise ParameterError("no flow fields accumulated")
        return MotionTemplate("OFMT", self.values.copy(), max(self.frames, 1),
                              lambda_fg=self.lambda_fg, eps_s=self.eps_s)


def accumulate_ofmt(flows: Iterable[FlowField], lambda_fg: float = 5.0, eps_s: float = 1.0,
                    mode: str = "additive") -> MotionTemplate:
    acc = OFMTAccumulator(lambda_fg, eps_s, mode)
    for f in flows:
        acc.update(f)
    return acc.template()


def resample_frames(frames: Sequence[np.ndarray], fps: float, target_fps: float = TEMPLATE_FPS) -> list:
    """Nearest-frame resampling of a clip to ``target_fps``."""
    frames = list(frames)
    if fps <= 0:
        raise ParameterError(f"fps must be positive, got {fps}")
    if abs(fps - target_fps) < 1e-9 or len(frames) < 2:
        return frames
    n_out = max(2, int(round((len(frames) - 1) * target_fps / fps)) + 1)
    idx = np.floor(np.linspace(0, len(frames) - 1, n_out) + 0.5).astype(int)
    return [frames[i] for i in idx]


class OFMTStream:
    """Frame-by-frame OFMT computation for one clip."""

    def __init__(self, params: TemplateParams = TemplateParams()):
        self.params = params
        self._acc = OFMTAccumulator(params.lambda_fg, params.eps_s, params.mode)
        self._prev: Optional[np.ndarray] = None

    def push(self, frame) -> None:
        gray = to_grayscale(frame)
        if self._prev is not None:
            self._acc.update(lucas_kanade_flow(self._prev, gray, **self.params.flow_kwargs()))
        self._prev = gray

    def template(self) -> MotionTemplate:
        return self._acc.template()


def clip_flows(frames: Sequence[np.ndarray], params: TemplateParams = TemplateParams()) -> list[FlowField]:
    gray = [to_grayscale(f) for f in frames]
    return [lucas_kanade_flow(a, b, **params.flow_kwargs()) for a, b in zip(gray, gray[1:])]


def ofmt_from_frames(frames: Sequence[np.ndarray], params: TemplateParams = TemplateParams(),
                     fps: float = TEMPLATE_FPS) -> MotionTemplate:
    """OFMT of a whole clip, after resampling it to ``params.fps``."""
    frames = resample_frames(frames, fps, params.fps)
    if len(frames) < 2:
        raise ParameterError("an OFMT needs at least two frames")
    return accumulate_ofmt(clip_flows(frames, params), params.lambda_fg, params.eps_s, params.mode)


def render_template(t: MotionTemplate) -> np.ndarray:
    """Min-max scale to 8-bit with round-half-up; an all-zero template stays zero."""
    v = np.asarray(t.values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return np.where(v > 0, 255, 0).astype(np.uint8)
    scaled = (v - lo) / (hi - lo) * 255.0
    return np.floor(scaled + 0.5).clip(0, 255).astype(np.uint8)


def save_image(img: np.ndarray, path) -> Path:
    """Write an 8-bit image as PNG or binary PGM, chosen by suffix."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in (".png", ".pgm"):
        raise FormatError(f"unsupported image suffix {path.suffix!r}; use .png or .pgm")
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        raise FormatError(f"expected an 8-bit image, got dtype {arr.dtype}")
    Image.fromarray(arr).save(path, format="PNG" if suffix == ".png" else "PPM")
    return path
