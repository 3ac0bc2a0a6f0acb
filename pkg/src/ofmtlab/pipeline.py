"""Turning clips into network inputs for the two streams."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from PIL import Image

from .data.clips import GestureClip
from .errors import DimensionError
from .models import ModelSpec
from .templates import TemplateParams, ofmt_from_frames, render_template


def resize_plane(img: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Resize a 2-D array to ``(H, W)``; exact integer factors use block means."""
    h, w = img.shape
    th, tw = size
    if (h, w) == (th, tw):
        return img.astype(np.float32)
    if h % th == 0 and w % tw == 0:
        return img.reshape(th, h // th, tw, w // tw).mean(axis=(1, 3), dtype=np.float64).astype(np.float32)
    pil = Image.fromarray(img.astype(np.float32), mode="F")
    return np.asarray(pil.resize((tw, th), Image.BILINEAR), dtype=np.float32)


def temporal_indices(n: int, t: int) -> np.ndarray:
    """``t`` evenly spaced frame indices (nearest) spanning a clip of ``n`` frames."""
    return np.floor(np.linspace(0, n - 1, t) + 0.5).astype(int)


def video_tensor(clip: GestureClip, spec: ModelSpec) -> np.ndarray:
    """Frames as ``(C, T, H, W)`` float32 in [0, 1] for the 3D stream."""
    c, t, h, w = spec.input_shape
    frames = clip.frames
    if frames.ndim == 3:
        frames = frames[..., None]
    if c == 1 and frames.shape[-1] == 3:
        frames = (frames.astype(np.float64) @ np.array([0.299, 0.587, 0.114]))[..., None]
    elif frames.shape[-1] != c:
        raise DimensionError(f"clip has {frames.shape[-1]} channels, model expects {c}")
    out = np.empty((c, t, h, w), dtype=np.float32)
    for j, i in enumerate(temporal_indices(len(frames), t)):
        for ch in range(c):
            out[ch, j] = resize_plane(np.asarray(frames[i, :, :, ch], dtype=np.float64), (h, w))
    return out / np.float32(255)


def video_batch(clips: Sequence[GestureClip], spec: ModelSpec) -> np.ndarray:
    return np.stack([video_tensor(c, spec) for c in clips]) if clips else np.zeros((0, *spec.input_shape), np.float32)


def clip_template(clip: GestureClip, params: TemplateParams = TemplateParams()) -> np.ndarray:
    """Rendered 8-bit OFMT image of one clip."""
    return render_template(ofmt_from_frames(clip.frames, params, clip.fps))


def template_images(clips: Sequence[GestureClip], params: TemplateParams = TemplateParams()) -> np.ndarray:
    return np.stack([clip_template(c, params) for c in clips])


def image_batch(images: np.ndarray, spec: ModelSpec) -> np.ndarray:
    """8-bit templates ``(N, H', W')`` resized to the LeNet input, kept as uint8 ``(N, 1, H, W)``.

    Pixel scaling to [0, 1] happens at batch time so augmentation can work on
    the 8-bit image.
    """
    _, h, w = spec.input_shape
    images = np.asarray(images)
    if images.ndim == 4:
        images = images[:, 0]
    if images.shape[1:] == (h, w):
        return images[:, None].astype(np.uint8)
    out = [np.floor(resize_plane(im.astype(np.float64), (h, w)) + 0.5).clip(0, 255) for im in images]
    return np.stack(out)[:, None].astype(np.uint8)
