"""Risk ranking by iterative support-vector peeling.

Each pass trains one-vs-rest linear SVMs on the samples still in the pool,
labels every on-or-inside-margin sample with the current rank and removes
it. Rank 1 is the riskiest (closest to a separating hyperplane).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from repfl.dataset import CsvFormatError, Dataset, parse_rows, read_table
from repfl.model import ovr_support_indices


@dataclass(frozen=True)
class SvmConfig:
    epochs: int = 300
    learning_rate: float = 0.5
    lam: float = 0.01
    tol: float = 1e-3

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"svm epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ValueError(f"svm learning_rate must be > 0, got {self.learning_rate}")
        if not self.lam >= 0:
            raise ValueError(f"svm lam must be >= 0, got {self.lam}")
        if not self.tol >= 0:
            raise ValueError(f"svm tol must be >= 0, got {self.tol}")


@dataclass(frozen=True, eq=False)
class RiskAnnotatedDataset:
    data: Dataset
    risk: np.ndarray

    def __post_init__(self):
        risk = np.array(self.risk, dtype=np.int64, copy=True)
        if risk.shape != (self.data.n,):
            raise ValueError(f"expected {self.data.n} risk ranks, got shape {risk.shape}")
        if risk.size and (risk.min() != 1 or set(np.unique(risk)) != set(range(1, int(risk.max()) + 1))):
            raise ValueError("risk ranks must form a contiguous range starting at 1")
        risk.setflags(write=False)
        object.__setattr__(self, "risk", risk)

    @property
    def levels(self) -> int:
        return int(self.risk.max()) if self.risk.size else 0

    def strip(self) -> Dataset:
        return self.data

    def to_csv(self, path: Union[str, Path, None] = None) -> str:
        return self.data.to_csv(path, extra=[("risk_rank", self.risk.tolist())])


def assess_risk(data: Dataset, svm: SvmConfig = SvmConfig(), max_levels: Optional[int] = None) -> RiskAnnotatedDataset:
    """Annotate every sample with the peel pass that removed it.

    Peeling stops once the pool is empty or holds a single class; leftovers
    get the next rank, which is then the lowest-risk one. ``max_levels``
    folds every rank above it into ``max_levels``.
    """
    if data.n == 0:
        raise ValueError("cannot assess risk of an empty dataset")
    if max_levels is not None and max_levels < 1:
        raise ValueError(f"max_levels must be >= 1, got {max_levels}")
    risk = np.zeros(data.n, dtype=np.int64)
    pool = np.arange(data.n)
    rank = 1
    while pool.size:
        labels = data.y[pool]
        classes = np.unique(labels).tolist()
        if len(classes) < 2:
            risk[pool] = rank
            break
        local = ovr_support_indices(data.X[pool], labels, classes, svm.epochs, svm.learning_rate, svm.lam, svm.tol)
        risk[pool[local]] = rank
        pool = np.delete(pool, local)
        rank += 1
    if max_levels is not None:
        risk = np.minimum(risk, max_levels)
    return RiskAnnotatedDataset(data, risk)


def load_annotated_csv(path: Union[str, Path]) -> RiskAnnotatedDataset:
    header, rows = read_table(path)
    if len(header) < 3 or header[-2:] != ["label", "risk_rank"]:
        raise CsvFormatError(f"{path}: header must be f1,...,fd,label,risk_rank")
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    data = parse_rows(header, [r[:-1] for r in rows], len(header) - 2)
    ranks = []
    for i, row in enumerate(rows, start=2):
        try:
            ranks.append(int(row[-1]))
        except ValueError:
            raise CsvFormatError(f"line {i}: risk_rank {row[-1]!r} is not an integer") from None
    return RiskAnnotatedDataset(data, np.asarray(ranks))
