"""Mini-batch SGD training and evaluation for either stream."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .data.augment import AugmentPolicy, augment_image
from .errors import DataError, LabelError, ParameterError
from .models import ModelWeights
from .tensor import C3D_SCHEDULE, LENET_SCHEDULE, LRSchedule, Sequential, Tensor, sgd_update, softmax_crossentropy

log = logging.getLogger(__name__)

STREAMS = ("3D", "2D")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    lr_schedule: LRSchedule
    seed: int = 0
    stream: str = "3D"
    augment: Optional[AugmentPolicy] = None
    loss_reduction: str = "mean"

    def __post_init__(self):
        if self.stream not in STREAMS:
            raise ParameterError(f"stream must be one of {STREAMS}, got {self.stream!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ParameterError("epochs and batch_size must be >= 1")
        if self.loss_reduction not in ("sum", "mean"):
            raise ParameterError(f"loss_reduction must be 'sum' or 'mean', got {self.loss_reduction!r}")
        if self.augment is not None and self.stream != "2D":
            raise ParameterError("augmentation applies to the 2D stream only")

    @classmethod
    def defaults(cls, stream: str, **overrides) -> "TrainConfig":
        """Per-stream defaults.

        The 3D stream sums the loss over its batch of 10 and the 2D stream
        averages over its batch of 32; at the scheduled rates the scaled C3D
        barely moves with a mean loss and LeNet diverges with a summed one.
        """
        base = {
            "3D": dict(epochs=100, batch_size=10, lr_schedule=C3D_SCHEDULE, stream="3D", loss_reduction="sum"),
            "2D": dict(epochs=50, batch_size=32, lr_schedule=LENET_SCHEDULE, stream="2D", loss_reduction="mean"),
        }[stream]
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr_schedule": [list(s) for s in self.lr_schedule.steps],
            "seed": self.seed,
            "stream": self.stream,
            "augment": self.augment.to_dict() if self.augment else None,
            "loss_reduction": self.loss_reduction,
        }


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    loss: float
    train_acc: float
    test_acc: Optional[float] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass
class TrainResult:
    weights: ModelWeights
    history: list[EpochRecord] = field(default_factory=list)
    seconds: float = 0.0

    def write_log(self, path) -> Path:
        path = Path(path)
        path.write_text("".join(r.to_json() + "\n" for r in self.history))
        return path


def as_float_batch(x: np.ndarray) -> np.ndarray:
    """8-bit arrays become float32 in [0, 1]; float arrays pass through."""
    return x.astype(np.float32) / np.float32(255) if x.dtype == np.uint8 else x.astype(np.float32, copy=False)


def _check_dataset(inputs: np.ndarray, labels: np.ndarray, num_classes: int) -> None:
    if len(inputs) == 0:
        raise DataError("training set is empty")
    if len(inputs) != len(labels):
        raise DataError(f"{len(inputs)} inputs but {len(labels)} labels")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise LabelError(f"labels must lie in 0..{num_classes - 1}, got range {labels.min()}..{labels.max()}")


def train_model(model: Sequential, inputs: np.ndarray, labels: Sequence[int], config: TrainConfig,
                validation: Optional[tuple[np.ndarray, Sequence[int]]] = None,
                on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> TrainResult:
    """Train ``model`` in place with mini-batch SGD.

    ``inputs`` are batches in the model's input shape, either float or
    uint8 (scaled by 1/255 per batch). With ``config.augment`` set, inputs
    must be uint8 single-channel images and every sample of every batch gets
    a fresh random affine transform.

    Three generators derived from ``config.seed`` drive the epoch shuffle,
    dropout and augmentation, so a fixed seed gives identical weights.
    """
    inputs = np.asarray(inputs)
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = model.shapes()[-1][0]
    _check_dataset(inputs, labels, n_classes)
    if config.augment is not None and inputs.dtype != np.uint8:
        raise ParameterError("augmentation needs uint8 template images")
    shuffle_rng = np.random.default_rng([config.seed, 0])
    dropout_rng = np.random.default_rng([config.seed, 1])
    augment_rng = np.random.default_rng([config.seed, 2])
    history = []
    start = time.perf_counter()
    n = len(inputs)
    for epoch in range(config.epochs):
        lr = config.lr_schedule.lr_at(epoch)
        order = shuffle_rng.permutation(n)
        total_loss, correct = 0.0, 0
        for b in range(0, n, config.batch_size):
            idx = order[b : b + config.batch_size]
            xb = inputs[idx]
            if config.augment is not None:
                xb = np.stack([augment_image(im, config.augment, augment_rng) for im in xb])
            logits = model.forward(Tensor(as_float_batch(xb)), train=True, rng=dropout_rng)
            probs, loss = softmax_crossentropy(logits, labels[idx], reduction=config.loss_reduction)
            loss.backward()
            sgd_update(model.params(), lr)
            total_loss += loss.item() * (len(idx) if config.loss_reduction == "mean" else 1)
            correct += int((probs.argmax(axis=1) == labels[idx]).sum())
        record = EpochRecord(epoch, lr, total_loss / n, correct / n)
        if validation is not None:
            record.test_acc = evaluate_model(model, *validation).accuracy
        history.append(record)
        log.info("epoch %d lr %g loss %.4f train_acc %.4f test_acc %s", epoch, lr, record.loss,
                 record.train_acc, "-" if record.test_acc is None else f"{record.test_acc:.4f}")
        if on_epoch is not None:
            on_epoch(record)
    return TrainResult(ModelWeights.from_model(model), history, time.perf_counter() - start)


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray
    probs: np.ndarray

    @property
    def per_class_accuracy(self) -> np.ndarray:
        rows = self.confusion.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, np.diag(self.confusion) / np.maximum(rows, 1), np.nan)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class_accuracy": [None if np.isnan(a) else float(a) for a in self.per_class_accuracy],
            "confusion": self.confusion.tolist(),
        }


def predict_labels(probs: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ``np.argmax`` already returns the lowest index on ties."""
    return np.asarray(probs).argmax(axis=-1)


def confusion_matrix(true: Sequence[int], pred: Sequence[int], num_classes: int) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(true, dtype=int), np.asarray(pred, dtype=int)), 1)
    return cm


def scores_result(probs: np.ndarray, labels: Sequence[int]) -> EvalResult:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise DataError("evaluation set is empty")
    pred = predict_labels(probs)
    cm = confusion_matrix(labels, pred, probs.shape[1])
    return EvalResult(float((pred == labels).mean()), cm, probs)


def evaluate_model(model: Sequential, inputs: np.ndarray, labels: Sequence[int], batch_size: int = 32) -> EvalResult:
    inputs = np.asarray(inputs)
    if len(inputs) == 0:
        raise DataError("evaluation set is empty")
    probs = np.concatenate([model.predict_proba(as_float_batch(inputs[i : i + batch_size]), batch_size)
                            for i in range(0, len(inputs), batch_size)])
    return scores_result(probs, labels)


def write_confusion_csv(cm: np.ndarray, path) -> Path:
    """CSV with a header row of predicted classes and one row per true class."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["true\\pred", *range(cm.shape[1])])
        for i, row in enumerate(cm):
            w.writerow([i, *row.tolist()])
    return path
