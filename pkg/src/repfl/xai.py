"""Permutation feature importance (accuracy drop) for the attacker."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from repfl.dataset import Dataset
from repfl.model import LinearModel, predict_labels


@dataclass(frozen=True, eq=False)
class ImportanceReport:
    importance: np.ndarray
    baseline_accuracy: float
    repeats: int
    seed: int

    @property
    def d(self) -> int:
        return self.importance.shape[0]

    def to_csv(self, path: Union[str, Path, None] = None) -> str:
        lines = [f"# baseline={self.baseline_accuracy!r}", "feature,importance"]
        lines += [f"{j + 1},{float(v)!r}" for j, v in enumerate(self.importance)]
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def column_rng(seed: int, column: int, repeat: int) -> np.random.Generator:
    """Independent stream per (seed, column, repeat) so evaluation order cannot matter."""
    return np.random.default_rng([seed, column, repeat])


def permutation_importance(model: LinearModel, data: Dataset, repeats: int = 5, seed: int = 0) -> ImportanceReport:
    """Baseline accuracy minus the mean accuracy over ``repeats`` shuffles of each column."""
    if data.n == 0:
        raise ValueError("empty dataset")
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    # integer hit counts keep untouched columns at exactly zero importance
    base_hits = int(np.sum(predict_labels(model, data.X) == data.y))
    importance = np.zeros(data.d)
    X = data.X.copy()
    for j in range(data.d):
        column = data.X[:, j]
        hits = 0
        for r in range(repeats):
            X[:, j] = column[column_rng(seed, j, r).permutation(data.n)]
            hits += int(np.sum(predict_labels(model, X) == data.y))
        X[:, j] = column
        importance[j] = (base_hits * repeats - hits) / (repeats * data.n)
    baseline = base_hits / data.n
    return ImportanceReport(importance, baseline, repeats, seed)


def extreme_features(report: ImportanceReport) -> Tuple[int, int]:
    """(most, least) important feature as 1-based numbers matching the ``f1..fd`` columns.

    Ties go to the lowest number.
    """
    return int(np.argmax(report.importance)) + 1, int(np.argmin(report.importance)) + 1
