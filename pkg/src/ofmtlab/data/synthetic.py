"""Synthetic air-written digits: a bright blob tracing single-stroke numerals.

Stroke shapes loosely follow the Palm Graffiti digit alphabet (one stroke,
fixed start point). Each clip is a Gaussian blob moving along a jittered copy
of its digit's polyline over a black background with additive pixel noise.
The exact polyline and per-frame blob centres come back with every clip so
tests can compare templates against ground truth.

Stroke control points are versioned by ``STROKES_VERSION``; changing them
changes every generated dataset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError
from .clips import GestureClip

STROKES_VERSION = 1
MIN_FRAME_SIZE = 24
BLOB_RADIUS_AT_64 = 3.0
NOISE_SIGMA = 2.0
# Blob intensity falls to a quarter of its peak at the nominal radius.
BLOB_SIGMA_PER_RADIUS = 0.6
# The nominal-speed stroke ends at this fraction of the clip.
NOMINAL_DURATION = 0.85


def _arc(cx, cy, rx, ry, a0, a1, n=24):
    t = np.radians(np.linspace(a0, a1, n))
    return np.stack([cx + rx * np.cos(t), cy - ry * np.sin(t)], axis=1)


def _pts(*xy):
    return np.array(xy, dtype=np.float64)


def _digit_strokes() -> dict[int, np.ndarray]:
    t = np.linspace(0, 2 * np.pi, 64)
    eight = np.stack([0.5 + 0.24 * np.sin(2 * t), 0.5 - 0.38 * np.cos(t)], axis=1)
    return {
        0: _arc(0.5, 0.5, 0.27, 0.38, 90, 440, 40),
        1: _pts((0.5, 0.12), (0.5, 0.88)),
        2: np.vstack([_arc(0.5, 0.33, 0.25, 0.21, 165, -25), _pts((0.25, 0.88), (0.78, 0.88))]),
        3: np.vstack([_arc(0.48, 0.3, 0.24, 0.18, 155, -90), _arc(0.48, 0.68, 0.27, 0.2, 90, -155)]),
        4: _pts((0.32, 0.12), (0.28, 0.6), (0.78, 0.6), (0.66, 0.36), (0.64, 0.88)),
        5: np.vstack([_pts((0.74, 0.13), (0.33, 0.13), (0.3, 0.46)), _arc(0.48, 0.65, 0.26, 0.22, 125, -150)]),
        6: np.vstack([_pts((0.68, 0.12), (0.44, 0.28), (0.31, 0.5)), _arc(0.5, 0.68, 0.2, 0.2, 180, 520)]),
        7: _pts((0.24, 0.13), (0.76, 0.13), (0.42, 0.88)),
        8: eight,
        9: np.vstack([_arc(0.5, 0.31, 0.22, 0.19, 0, 355, 32), _pts((0.72, 0.31), (0.7, 0.88))]),
    }


DIGIT_STROKES = _digit_strokes()


def resample_polyline(points: np.ndarray, step: float) -> np.ndarray:
    """Points spaced ``step`` apart along the polyline (endpoints kept)."""
    seg = np.diff(points, axis=0)
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
    n = max(2, int(math.ceil(cum[-1] / step)) + 1)
    s = np.linspace(0.0, cum[-1], n)
    return np.stack([np.interp(s, cum, points[:, 0]), np.interp(s, cum, points[:, 1])], axis=1)


def point_at_fraction(points: np.ndarray, frac: np.ndarray) -> np.ndarray:
    seg = np.diff(points, axis=0)
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
    s = np.clip(frac, 0.0, 1.0) * cum[-1]
    return np.stack([np.interp(s, cum, points[:, 0]), np.interp(s, cum, points[:, 1])], axis=1)


def polyline_prefix(points: np.ndarray, frac: float) -> np.ndarray:
    """The part of the polyline up to arc-length fraction ``frac``."""
    seg = np.diff(points, axis=0)
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
    s = float(np.clip(frac, 0.0, 1.0)) * cum[-1]
    keep = points[cum < s]
    end = point_at_fraction(points, np.array([frac]))
    return np.vstack([keep, end]) if len(keep) else np.vstack([points[:1], end])


def distance_to_polyline(p: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Euclidean distance from each row of ``p`` to the polyline."""
    a, b = points[:-1], points[1:]
    ab = b - a
    denom = np.maximum((ab**2).sum(1), 1e-12)
    ap = p[:, None, :] - a[None]
    t = np.clip((ap * ab[None]).sum(-1) / denom[None], 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.hypot(*(p[:, None, :] - closest).transpose(2, 0, 1)).min(axis=1)


@dataclass
class SyntheticTruth:
    """Ground truth for one clip, in pixel coordinates ``(x, y)``."""

    polyline: np.ndarray
    centers: np.ndarray
    progress: np.ndarray
    radius: float

    def traversed(self) -> np.ndarray:
        return polyline_prefix(self.polyline, float(self.progress.max()))


def path_mask(truth: SyntheticTruth, shape: tuple[int, int], radius: float | None = None) -> np.ndarray:
    """Pixels within ``radius`` of the traversed part of the path."""
    radius = truth.radius if radius is None else radius
    dense = resample_polyline(truth.traversed(), 0.25)
    ys, xs = np.mgrid[0 : shape[0], 0 : shape[1]]
    mask = np.zeros(shape, dtype=bool)
    for x, y in dense:
        x0, x1 = int(max(0, math.floor(x - radius))), int(min(shape[1] - 1, math.ceil(x + radius)))
        y0, y1 = int(max(0, math.floor(y - radius))), int(min(shape[0] - 1, math.ceil(y + radius)))
        sub = (xs[y0 : y1 + 1, x0 : x1 + 1] - x) ** 2 + (ys[y0 : y1 + 1, x0 : x1 + 1] - y) ** 2 <= radius**2
        mask[y0 : y1 + 1, x0 : x1 + 1] |= sub
    return mask


def trajectory_overlap(template_values: np.ndarray, truth: SyntheticTruth, radius: float | None = None) -> float:
    """Fraction of dilated ground-truth path pixels that are nonzero in the template."""
    mask = path_mask(truth, template_values.shape, radius)
    return float((template_values[mask] > 0).mean()) if mask.any() else 1.0


def render_frames(centers: np.ndarray, size: int, color, radius: float,
                  noise_sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Frames ``(T, size, size, 3)`` uint8 of a Gaussian blob at ``centers``."""
    color = np.asarray(color, dtype=np.float64).reshape(1, 1, 3)
    sigma = BLOB_SIGMA_PER_RADIUS * radius
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    frames = np.empty((len(centers), size, size, 3), dtype=np.uint8)
    for i, (cx, cy) in enumerate(centers):
        blob = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * sigma**2))[..., None] * color
        if noise_sigma > 0:
            blob = blob + rng.normal(0.0, noise_sigma, blob.shape)
        frames[i] = np.floor(np.clip(blob, 0, 255) + 0.5).astype(np.uint8)
    return frames


@dataclass(frozen=True)
class SubjectStyle:
    scale: float
    slant: float
    rotation: float
    speed: float
    color: tuple[float, float, float]


def _subject_style(rng: np.random.Generator) -> SubjectStyle:
    hue = rng.uniform(0, 1)
    base = np.array([math.cos(2 * math.pi * (hue + k / 3)) for k in range(3)])
    color = tuple(float(c) for c in 150 + 90 * (base - base.min()) / max(np.ptp(base), 1e-9))
    return SubjectStyle(
        scale=float(rng.uniform(0.9, 1.1)),
        slant=float(rng.uniform(-0.15, 0.15)),
        rotation=float(rng.uniform(-8, 8)),
        speed=float(rng.uniform(0.9, 1.1)),
        color=color,
    )


def _place_stroke(stroke: np.ndarray, style: SubjectStyle, offset: np.ndarray, size: int,
                  rng: np.random.Generator) -> np.ndarray:
    p = stroke - 0.5
    p = p + rng.normal(0.0, 0.015, p.shape)
    th = math.radians(style.rotation + rng.uniform(-3, 3))
    rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    shear = np.array([[1.0, style.slant], [0.0, 1.0]])
    p = p @ (rot @ shear).T * (0.8 * style.scale)
    return (p + 0.5 + offset) * size


def generate_synthetic(num_subjects: int = 3, reps_per_digit: int = 3, frame_size: int = 64,
                       num_frames: int = 24, seed: int = 0, digits=range(10),
                       noise_sigma: float = NOISE_SIGMA):
    """Generate ``num_subjects * len(digits) * reps_per_digit`` clips.

    Per-clip jitter: start offset up to 10% of the frame, speed within +-20%
    of nominal, control-point wobble. Per-subject style: size, slant,
    rotation and blob colour.

    Returns
    -------
    clips : list of GestureClip
    truths : list of SyntheticTruth
        Ground-truth polyline and blob centres, parallel to ``clips``.
    """
    if min(num_subjects, reps_per_digit, num_frames) < 1:
        raise ParameterError("subject, repetition and frame counts must be >= 1")
    if num_frames < 2:
        raise ParameterError("clips need at least 2 frames")
    if frame_size < MIN_FRAME_SIZE:
        raise ParameterError(f"frame_size must be >= {MIN_FRAME_SIZE} px, got {frame_size}")
    digits = list(digits)
    radius = BLOB_RADIUS_AT_64 * frame_size / 64.0
    root = np.random.default_rng(seed)
    subject_seeds = root.integers(0, 2**63, size=num_subjects)
    clips, truths = [], []
    for s in range(num_subjects):
        srng = np.random.default_rng(subject_seeds[s])
        style = _subject_style(srng)
        for d in digits:
            for r in range(reps_per_digit):
                crng = np.random.default_rng([int(subject_seeds[s]), d, r])
                offset = crng.uniform(-0.1, 0.1, size=2)
                speed = float(np.clip(style.speed * crng.uniform(0.9, 1.1), 0.8, 1.2))
                polyline = _place_stroke(DIGIT_STROKES[d], style, offset, frame_size, crng)
                t = np.arange(num_frames) / max(num_frames - 1, 1)
                progress = np.minimum(1.0, speed * t / NOMINAL_DURATION)
                centers = point_at_fraction(polyline, progress)
                frames = render_frames(centers, frame_size, style.color, radius, noise_sigma, crng)
                clips.append(GestureClip(frames, d, f"s{s:02d}", "synthetic", f"s{s:02d}_r{r}"))
                truths.append(SyntheticTruth(polyline, centers, progress, radius))
    return clips, truths
