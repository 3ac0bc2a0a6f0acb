"""Stratified k-fold partitions."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ParameterError, StratificationError


@dataclass
class DatasetSplit:
    folds: list[list[int]]
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def train_test(self, test_fold: int) -> tuple[np.ndarray, np.ndarray]:
        test = np.array(sorted(self.folds[test_fold]), dtype=int)
        train = np.array(sorted(i for j, f in enumerate(self.folds) if j != test_fold for i in f), dtype=int)
        return train, test

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "k": self.k, "folds": self.folds}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "DatasetSplit":
        d = json.loads(text)
        return cls([list(map(int, f)) for f in d["folds"]], int(d["seed"]))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")


def stratified_kfold(labels, k: int = 10, seed: int = 0) -> DatasetSplit:
    """Shuffle each class with ``seed`` and deal its members round-robin.

    The dealing position carries over from one class to the next, so fold
    sizes differ by at most one overall as well as per class.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ParameterError(f"k must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    start = 0
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if len(members) < k:
            raise StratificationError(f"class {cls} has {len(members)} samples, fewer than k={k}")
        for j, idx in enumerate(rng.permutation(members)):
            folds[(start + j) % k].append(int(idx))
        start = (start + len(members)) % k
    return DatasetSplit([sorted(f) for f in folds], seed)


def train_test_split(labels, test_fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Stratified holdout: the first fold of a ``round(1 / test_fraction)``-fold split."""
    if not 0 < test_fraction < 1:
        raise ParameterError(f"test_fraction must be in (0, 1), got {test_fraction}")
    k = max(2, int(round(1 / test_fraction)))
    return stratified_kfold(labels, k, seed).train_test(0)
