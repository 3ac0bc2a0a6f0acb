"""Gesture clips and the on-disk frame-directory layout.

Layout::

    root/<class>/<clip>/frame_00000.png
    root/<class>/<clip>/frame_00001.png
    ...

``<class>`` is the integer label; frames may be PNG or PGM and are numbered
contiguously from zero.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from ..errors import DataError, DimensionError, FormatError, LabelError, MissingFrameError
from ..flow import LUMA

log = logging.getLogger(__name__)

NUM_CLASSES = 10
FRAME_RE = re.compile(r"^frame_(\d{5})\.(png|pgm)$", re.IGNORECASE)


@dataclass
class GestureClip:
    """One pre-segmented gesture: frames ``(T, H, W, 3)`` or ``(T, H, W)`` uint8."""

    frames: np.ndarray
    label: int
    subject: str
    source: str = "synthetic"
    name: str = ""
    fps: float = 30.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim not in (3, 4) or len(self.frames) < 2:
            raise DimensionError(f"a clip needs >= 2 frames of equal size, got array {self.frames.shape}")
        if not 0 <= int(self.label) < NUM_CLASSES:
            raise LabelError(f"label {self.label} outside 0..{NUM_CLASSES - 1}")
        self.label = int(self.label)

    @property
    def clip_id(self) -> str:
        return f"{self.label}_{self.name}" if self.name else str(self.label)

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def frame_size(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]


def frame_path(clip_dir: Path, index: int, suffix: str = ".png") -> Path:
    return clip_dir / f"frame_{index:05d}{suffix}"


def read_frame(path) -> np.ndarray:
    """Read an 8-bit frame as ``(H, W)`` grayscale or ``(H, W, 3)`` RGB."""
    try:
        with Image.open(path) as im:
            if im.mode in ("L", "RGB"):
                return np.asarray(im).copy()
            if im.mode in ("I;16", "I", "I;16B"):
                raise FormatError(f"{path}: 16-bit frames are not supported")
            return np.asarray(im.convert("RGB")).copy()
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"cannot read frame {path}: {exc}") from exc


def write_frame(frame: np.ndarray, path) -> None:
    """Write an 8-bit frame; ``.pgm`` takes single-channel frames only."""
    path = Path(path)
    arr = np.asarray(frame)
    if arr.dtype != np.uint8:
        raise FormatError(f"frames must be 8-bit, got dtype {arr.dtype}")
    suffix = path.suffix.lower()
    if suffix not in (".png", ".pgm"):
        raise FormatError(f"unsupported frame suffix {path.suffix!r}")
    if suffix == ".pgm" and arr.ndim != 2:
        raise FormatError("PGM frames must be single-channel")
    Image.fromarray(arr).save(path, format="PNG" if suffix == ".png" else "PPM")


def load_clip_dir(clip_dir, label: int, name: str | None = None) -> GestureClip:
    """Load one clip directory; frame numbers must run 0..n-1 without gaps."""
    clip_dir = Path(clip_dir)
    entries = {}
    for p in clip_dir.iterdir():
        m = FRAME_RE.match(p.name)
        if m:
            entries[int(m.group(1))] = p
    if not entries:
        raise MissingFrameError(f"clip {clip_dir} contains no frame_%05d images")
    expected = set(range(max(entries) + 1))
    missing = sorted(expected - set(entries))
    if missing:
        raise MissingFrameError(f"clip {clip_dir}: missing frame index {missing[0]}")
    frames = [read_frame(entries[i]) for i in range(len(entries))]
    if any(f.shape != frames[0].shape for f in frames):
        raise DimensionError(f"clip {clip_dir}: frames differ in size")
    name = name or clip_dir.name
    subject = name.split("_")[0]
    return GestureClip(np.stack(frames), label, subject, source="directory", name=name)


def load_frame_dataset(root) -> list[GestureClip]:
    """Load every clip under ``root`` in lexicographic (class, clip) order."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    clips = []
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        if not class_dir.name.isdigit() or not 0 <= int(class_dir.name) < NUM_CLASSES:
            raise LabelError(f"unknown class directory {class_dir.name!r} under {root}")
        label = int(class_dir.name)
        for clip_dir in sorted(p for p in class_dir.iterdir() if p.is_dir()):
            clips.append(load_clip_dir(clip_dir, label))
    if not clips:
        log.warning("no clips found under %s", root)
    return clips


def export_dataset(clips: Sequence[GestureClip], root, suffix: str = ".png") -> Path:
    """Write clips in the frame-directory layout.

    PGM is a gray format, so RGB clips exported as ``.pgm`` are stored as
    rounded luma.
    """
    root = Path(root)
    for i, clip in enumerate(clips):
        clip_dir = root / str(clip.label) / (clip.name or f"clip{i:05d}")
        clip_dir.mkdir(parents=True, exist_ok=True)
        frames = clip.frames
        if suffix.lower() == ".pgm" and frames.ndim == 4:
            frames = np.floor(frames.astype(np.float64) @ LUMA + 0.5).clip(0, 255).astype(np.uint8)
        for j, frame in enumerate(frames):
            write_frame(frame, frame_path(clip_dir, j, suffix))
    return root
