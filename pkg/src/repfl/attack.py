"""Risk-targeted poisoning: cyclic label flips plus an importance-guided feature swap.

On every flagged node the ``alpha`` lowest-rank (riskiest) samples get their
label moved to the cyclic successor and their most and least important
features exchanged. Unflagged nodes pass through with ranks stripped.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from repfl.dataset import Dataset
from repfl.risk import RiskAnnotatedDataset
from repfl.xai import ImportanceReport, extreme_features


@dataclass(frozen=True)
class AttackPlan:
    """Per-node attack flags and a budget given as a count or as a fraction of each node."""

    flags: Tuple[bool, ...]
    budget: Optional[int] = None
    budget_fraction: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "flags", tuple(bool(f) for f in self.flags))
        if (self.budget is None) == (self.budget_fraction is None):
            raise ValueError("set exactly one of budget and budget_fraction")
        if self.budget is not None and self.budget < 0:
            raise ValueError(f"budget must be >= 0, got {self.budget}")
        if self.budget_fraction is not None and not 0 <= self.budget_fraction <= 1:
            raise ValueError(f"budget_fraction must lie in [0, 1], got {self.budget_fraction}")

    def alpha(self, n: int) -> int:
        """Samples to corrupt on a node holding ``n``; fractions round up, never past ``n``."""
        if self.budget is not None:
            return min(self.budget, n)
        return min(math.ceil(self.budget_fraction * n - 1e-9), n)


class ManifestEntry(NamedTuple):
    node: int
    sample_index: int
    old_label: int
    new_label: int
    f_max: int
    f_min: int


MANIFEST_HEADER = ("node", "sample_index", "old_label", "new_label", "f_max", "f_min")


def flip_label(y: int, C: int = 4) -> int:
    """Cyclic successor: ``C -> 1``, otherwise ``y + 1``."""
    if not 1 <= y <= C:
        raise ValueError(f"label {y} outside 1..{C}")
    return y % C + 1


def swap_features(x: np.ndarray, f_max: int, f_min: int) -> np.ndarray:
    """Copy of ``x`` with 1-based features ``f_max`` and ``f_min`` exchanged."""
    x = np.array(x, dtype=np.float64, copy=True)
    for f in (f_max, f_min):
        if not 1 <= f <= x.shape[0]:
            raise IndexError(f"feature {f} outside 1..{x.shape[0]}")
    x[[f_max - 1, f_min - 1]] = x[[f_min - 1, f_max - 1]]
    return x


def select_targets(annotated: RiskAnnotatedDataset, alpha: int) -> np.ndarray:
    """Indices of the ``alpha`` riskiest samples: ascending rank, then ascending index."""
    order = np.lexsort((np.arange(annotated.risk.size), annotated.risk))
    return np.sort(order[: max(0, alpha)])


def poison_node(annotated: RiskAnnotatedDataset, report: ImportanceReport, flag: bool, alpha: int,
                node: int = 0) -> Tuple[Dataset, List[ManifestEntry]]:
    data = annotated.strip()
    if not flag or alpha <= 0:
        return data, []
    if report is None:
        raise ValueError(f"node {node} is flagged but has no importance report")
    if report.d != data.d:
        raise ValueError(f"importance report covers {report.d} features, data has {data.d}")
    f_max, f_min = extreme_features(report)
    X = data.X.copy()
    y = data.y.copy()
    manifest = []
    for i in select_targets(annotated, min(alpha, data.n)):
        new = flip_label(int(y[i]), data.C)
        manifest.append(ManifestEntry(node, int(i), int(y[i]), new, f_max, f_min))
        y[i] = new
        X[i] = swap_features(X[i], f_max, f_min)
    return Dataset(X, y, data.C), manifest


def poison_federation(annotated: Sequence[RiskAnnotatedDataset], plan: AttackPlan,
                      reports: Sequence[Optional[ImportanceReport]]) -> Tuple[List[Dataset], List[ManifestEntry]]:
    """Poison each node independently. ``reports[k]`` may be ``None`` for unflagged nodes."""
    if not len(annotated) == len(plan.flags) == len(reports):
        raise ValueError(
            f"length mismatch: {len(annotated)} datasets, {len(plan.flags)} flags, {len(reports)} reports"
        )
    out, manifest = [], []
    for k, (node_data, flag, report) in enumerate(zip(annotated, plan.flags, reports)):
        poisoned, entries = poison_node(node_data, report, flag, plan.alpha(node_data.data.n), node=k)
        out.append(poisoned)
        manifest.extend(entries)
    return out, manifest


def manifest_csv(entries: Sequence[ManifestEntry], path: Union[str, Path, None] = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    writer.writerows(entries)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
