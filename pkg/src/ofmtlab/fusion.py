"""Decision-level fusion of the two streams' class probabilities."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data.clips import GestureClip
from .errors import DimensionError, ParameterError
from .models import ModelSpec
from .pipeline import clip_template, image_batch, video_tensor
from .templates import TemplateParams
from .tensor import Sequential
from .training import as_float_batch, predict_labels, scores_result

SWEEP_PAIRS = ((0.8, 0.2), (0.7, 0.3), (0.6, 0.4), (0.4, 0.6), (0.3, 0.7), (0.2, 0.8))


@dataclass(frozen=True)
class FusionWeights:
    w3: float = 0.6
    w2: float = 0.4

    def __post_init__(self):
        if self.w3 < 0 or self.w2 < 0:
            raise ParameterError(f"fusion weights must be non-negative, got ({self.w3}, {self.w2})")


def fuse_scores(p3, p2, w: FusionWeights = FusionWeights()) -> np.ndarray:
    """``w3 * p3 + w2 * p2`` elementwise; works on vectors or ``(M, N)`` batches."""
    p3 = np.asarray(p3, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    if p3.shape != p2.shape:
        raise DimensionError(f"score shapes differ: {p3.shape} vs {p2.shape}")
    return w.w3 * p3 + w.w2 * p2


def weight_sweep(p3: np.ndarray, p2: np.ndarray, labels: Sequence[int],
                 pairs: Sequence[tuple[float, float]] = SWEEP_PAIRS) -> list[dict]:
    """Fused accuracy for each ``(w3, w2)`` pair."""
    rows = []
    for w3, w2 in pairs:
        res = scores_result(fuse_scores(p3, p2, FusionWeights(w3, w2)), labels)
        rows.append({"w3": w3, "w2": w2, "accuracy": res.accuracy})
    return rows


def format_sweep(rows: list[dict]) -> str:
    lines = ["  w3    w2   accuracy"]
    lines += [f"{r['w3']:4.1f}  {r['w2']:4.1f}   {r['accuracy']:.4f}" for r in rows]
    return "\n".join(lines)


@dataclass
class Prediction:
    label: int
    scores: np.ndarray
    p3: np.ndarray
    p2: np.ndarray


def predict(clip: GestureClip, c3d: Sequential, lenet: Sequential, w: FusionWeights = FusionWeights(),
            params: TemplateParams = TemplateParams(), template: Optional[np.ndarray] = None) -> Prediction:
    """Run both streams on one clip and fuse; ties go to the lowest class index."""
    spec3: ModelSpec = c3d.spec
    spec2: ModelSpec = lenet.spec
    p3 = c3d.predict_proba(video_tensor(clip, spec3)[None])[0]
    img = clip_template(clip, params) if template is None else template
    p2 = lenet.predict_proba(as_float_batch(image_batch(img[None], spec2)))[0]
    scores = fuse_scores(p3, p2, w)
    return Prediction(int(predict_labels(scores)), scores, p3, p2)
