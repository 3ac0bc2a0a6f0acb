"""Random affine augmentation for 8-bit template images.

Every sampled map is a rotation, shear, per-axis zoom and shift about the
image centre. Zoom factors are positive and shear/rotation have unit
determinant, so the map never contains a reflection: mirrored digits would
turn one class into another (2/5, 6/9, ...).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import affine_transform

from ..errors import ConfigError

MAX_ROTATION = 20.0
MAX_SHIFT = 0.2
MAX_SHEAR = 0.2
MAX_ZOOM = 0.2


@dataclass(frozen=True)
class AugmentPolicy:
    """Sampling bounds; rotation in degrees, the rest as fractions.

    ``shear`` is the shear factor (tangent of the shear angle); ``zoom``
    draws each axis scale from ``[1 - zoom, 1 + zoom]``.
    """

    rotation: float = MAX_ROTATION
    width_shift: float = MAX_SHIFT
    height_shift: float = MAX_SHIFT
    shear: float = MAX_SHEAR
    zoom: float = MAX_ZOOM
    fill_mode: str = "nearest"
    horizontal_flip: bool = False
    vertical_flip: bool = False

    def __post_init__(self):
        limits = {"rotation": MAX_ROTATION, "width_shift": MAX_SHIFT, "height_shift": MAX_SHIFT,
                  "shear": MAX_SHEAR, "zoom": MAX_ZOOM}
        for name, limit in limits.items():
            value = getattr(self, name)
            if not 0 <= value <= limit:
                raise ConfigError(f"augmentation {name}={value} outside [0, {limit}]")
        if self.horizontal_flip or self.vertical_flip:
            raise ConfigError("flips are not allowed: they turn some digits into others")
        if self.fill_mode != "nearest":
            raise ConfigError(f"only fill_mode='nearest' is supported, got {self.fill_mode!r}")

    @classmethod
    def identity(cls) -> "AugmentPolicy":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)

    def to_dict(self) -> dict:
        return asdict(self)


DEFAULT_POLICY = AugmentPolicy()


@dataclass(frozen=True)
class AffineDraw:
    """One sampled transform: degrees, fractions of the image size, factors."""

    rotation: float
    shift_y: float
    shift_x: float
    shear: float
    zoom_y: float
    zoom_x: float


def sample_transform(policy: AugmentPolicy, rng: np.random.Generator) -> AffineDraw:
    """Draw each parameter uniformly within the policy bounds."""
    rotation = rng.uniform(-policy.rotation, policy.rotation)
    shift_y = rng.uniform(-policy.height_shift, policy.height_shift)
    shift_x = rng.uniform(-policy.width_shift, policy.width_shift)
    shear = rng.uniform(-policy.shear, policy.shear)
    zoom_y, zoom_x = rng.uniform(1 - policy.zoom, 1 + policy.zoom, size=2)
    return AffineDraw(float(rotation), float(shift_y), float(shift_x), float(shear), float(zoom_y), float(zoom_x))


def affine_matrix(draw: AffineDraw, shape: tuple[int, int]):
    """``(matrix, offset)`` mapping output ``(row, col)`` to input coordinates."""
    h, w = shape
    theta = math.radians(draw.rotation)
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    shr = np.array([[1.0, 0.0], [draw.shear, 1.0]])
    matrix = rot @ shr @ np.diag([draw.zoom_y, draw.zoom_x])
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    offset = center - matrix @ center + np.array([draw.shift_y * h, draw.shift_x * w])
    return matrix, offset


def sample_affine(policy: AugmentPolicy, rng: np.random.Generator, shape: tuple[int, int]):
    return affine_matrix(sample_transform(policy, rng), shape)


def augment_image(img: np.ndarray, policy: AugmentPolicy, rng: np.random.Generator) -> np.ndarray:
    """Apply one random affine map; shape and dtype are preserved."""
    arr = np.asarray(img)
    squeeze = arr.ndim == 3 and arr.shape[0] == 1
    plane = arr[0] if squeeze else arr
    if plane.ndim != 2:
        raise ConfigError(f"augment_image expects a single-channel image, got shape {arr.shape}")
    matrix, offset = sample_affine(policy, rng, plane.shape)
    out = affine_transform(plane.astype(np.float64), matrix, offset, order=1, mode="nearest")
    if arr.dtype == np.uint8:
        out = np.floor(out + 0.5).clip(0, 255).astype(np.uint8)
    else:
        out = out.astype(arr.dtype)
    return out[None] if squeeze else out
