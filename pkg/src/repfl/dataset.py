"""Labeled feature datasets: synthesis, CSV I/O, splitting and node partitioning.

Labels are 1-based integers in ``{1..C}`` everywhere. Sample order is
meaningful: indices identify samples across risk annotation, poisoning and
the poison manifest.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, NamedTuple, Sequence, Tuple, Union

import numpy as np


class Sample(NamedTuple):
    features: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered samples: an ``(n, d)`` float matrix and a length-``n`` label vector."""

    X: np.ndarray
    y: np.ndarray
    C: int

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        y = np.array(self.y, dtype=np.int64, copy=True)
        if X.ndim != 2:
            raise ValueError(f"features must be a 2-D array, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"expected {X.shape[0]} labels, got shape {y.shape}")
        if self.C < 1:
            raise ValueError(f"class count must be >= 1, got {self.C}")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        if y.size and (y.min() < 1 or y.max() > self.C):
            raise ValueError(f"labels must lie in 1..{self.C}")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[Sample]:
        for x, label in zip(self.X, self.y):
            yield Sample(x, int(label))

    def __getitem__(self, i: int) -> Sample:
        return Sample(self.X[i], int(self.y[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.C == other.C
            and self.X.shape == other.X.shape
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.C)

    def class_counts(self) -> np.ndarray:
        """Histogram of labels, index ``c - 1`` holds the count of class ``c``."""
        return np.bincount(self.y - 1, minlength=self.C)[: self.C]

    def to_csv(self, path: Union[str, Path, None] = None, extra: Sequence[Tuple[str, Sequence]] = ()) -> str:
        """Serialize to the ``f1,...,fd,label`` schema; extra columns are appended after ``label``."""
        buf = io.StringIO()
        header = [f"f{j + 1}" for j in range(self.d)] + ["label"] + [name for name, _ in extra]
        buf.write(",".join(header) + "\n")
        for i in range(self.n):
            cells = [repr(float(v)) for v in self.X[i]] + [str(int(self.y[i]))]
            cells += [str(col[i]) for _, col in extra]
            buf.write(",".join(cells) + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="\n")
        return text


@dataclass(frozen=True)
class SyntheticSpec:
    n_per_class: int = 125
    d: int = 16
    C: int = 4
    class_separation: float = 4.0
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_per_class < 1:
            raise ValueError(f"n_per_class must be >= 1, got {self.n_per_class}")
        if self.d < 2:
            raise ValueError(f"d must be >= 2, got {self.d}")
        if self.C < 2:
            raise ValueError(f"C must be >= 2, got {self.C}")
        if not self.class_separation > 0:
            raise ValueError(f"class_separation must be > 0, got {self.class_separation}")
        if not self.noise_sigma > 0:
            raise ValueError(f"noise_sigma must be > 0, got {self.noise_sigma}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


def class_means(spec: SyntheticSpec) -> np.ndarray:
    """Class ``c`` sits on axis ``(c-1) mod d``; each wrap-around pushes it one separation further out."""
    means = np.zeros((spec.C, spec.d))
    for c in range(spec.C):
        means[c, c % spec.d] = spec.class_separation * (1 + c // spec.d)
    return means


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Isotropic Gaussian blobs, one per class, emitted class by class."""
    rng = np.random.default_rng(spec.seed)
    means = class_means(spec)
    X = np.concatenate(
        [means[c] + spec.noise_sigma * rng.standard_normal((spec.n_per_class, spec.d)) for c in range(spec.C)]
    )
    y = np.repeat(np.arange(1, spec.C + 1), spec.n_per_class)
    return Dataset(X, y, spec.C)


class CsvFormatError(ValueError):
    """Malformed dataset CSV; the message names the offending line."""


def _parse_label(cell: str, lineno: int) -> int:
    try:
        value = float(cell)
    except ValueError:
        raise CsvFormatError(f"line {lineno}: label {cell!r} is not a number") from None
    if not value.is_integer():
        raise CsvFormatError(f"line {lineno}: label {cell!r} is not an integer")
    if value < 1:
        raise CsvFormatError(f"line {lineno}: invalid label {cell!r}, labels start at 1")
    return int(value)


def read_table(path: Union[str, Path]) -> Tuple[List[str], List[List[str]]]:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln.rstrip("\r") for ln in text.split("\n")]
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise CsvFormatError(f"{path}: empty file")
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise CsvFormatError(f"line {i}: ragged row, expected {len(header)} cells, got {len(row)}")
    return header, rows


def parse_rows(header: List[str], rows: List[List[str]], n_features: int, C: int = 0) -> Dataset:
    X = np.empty((len(rows), n_features))
    y = np.empty(len(rows), dtype=np.int64)
    for i, row in enumerate(rows):
        lineno = i + 2
        for j in range(n_features):
            try:
                X[i, j] = float(row[j])
            except ValueError:
                raise CsvFormatError(f"line {lineno}: non-numeric feature {row[j]!r} in column {header[j]}") from None
            if not math.isfinite(X[i, j]):
                raise CsvFormatError(f"line {lineno}: non-finite feature in column {header[j]}")
        y[i] = _parse_label(row[n_features], lineno)
    C = max(C, int(y.max()) if len(y) else 1)
    return Dataset(X.reshape(len(rows), n_features), y, C)


def load_csv(path: Union[str, Path]) -> Dataset:
    """Read a ``f1,...,fd,label`` table. ``d`` comes from the header, ``C`` from the largest label."""
    header, rows = read_table(path)
    if len(header) < 2 or header[-1].strip() != "label":
        raise CsvFormatError(f"{path}: header must be f1,...,fd,label")
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    return parse_rows(header, rows, len(header) - 1)


def _largest_remainder(quotas: np.ndarray, total: int) -> np.ndarray:
    base = np.floor(quotas).astype(np.int64)
    short = total - int(base.sum())
    order = np.argsort(-(quotas - base), kind="stable")
    base[order[:short]] += 1
    return base


def train_test_split(data: Dataset, test_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Stratified shuffled split; each side keeps the input's sample order."""
    if data.n == 0:
        raise ValueError("cannot split an empty dataset")
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n_test = int(round(data.n * test_fraction))
    if n_test == 0 or n_test == data.n:
        raise ValueError(f"test_fraction={test_fraction} leaves one side of a {data.n}-sample split empty")
    counts = data.class_counts()
    per_class = _largest_remainder(counts * (n_test / data.n), n_test)
    rng = np.random.default_rng(seed)
    test_idx = []
    for c in range(data.C):
        members = np.flatnonzero(data.y == c + 1)
        test_idx.append(rng.permutation(members)[: per_class[c]])
    mask = np.zeros(data.n, dtype=bool)
    mask[np.concatenate(test_idx)] = True
    return data.subset(np.flatnonzero(~mask)), data.subset(np.flatnonzero(mask))


def partition_indices(data: Dataset, K: int, scheme: str = "iid", beta: float = 0.5, seed: int = 0) -> List[np.ndarray]:
    """Index sets (sorted) assigning every sample to exactly one of ``K`` nodes."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if K > data.n:
        raise ValueError(f"cannot split {data.n} samples across {K} nodes")
    rng = np.random.default_rng(seed)
    if scheme == "iid":
        perm = rng.permutation(data.n)
        return [np.sort(perm[k::K]) for k in range(K)]
    if scheme != "label-skewed":
        raise ValueError(f"unknown partition scheme {scheme!r}")
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    buckets: List[List[int]] = [[] for _ in range(K)]
    for c in range(data.C):
        members = rng.permutation(np.flatnonzero(data.y == c + 1))
        if members.size == 0:
            continue
        props = rng.dirichlet(np.full(K, beta))
        sizes = _largest_remainder(props * members.size, members.size)
        for k, chunk in enumerate(np.split(members, np.cumsum(sizes)[:-1])):
            buckets[k].extend(chunk.tolist())
    # every node must hold at least one sample
    for k in range(K):
        if not buckets[k]:
            donor = max(range(K), key=lambda j: (len(buckets[j]), -j))
            buckets[k].append(buckets[donor].pop())
    return [np.sort(np.asarray(b, dtype=np.int64)) for b in buckets]


def partition(data: Dataset, K: int, scheme: str = "iid", beta: float = 0.5, seed: int = 0) -> List[Dataset]:
    """Split across ``K`` nodes. ``iid`` deals a shuffled deck round-robin; ``label-skewed``
    draws per-class node shares from a symmetric Dirichlet(``beta``)."""
    return [data.subset(idx) for idx in partition_indices(data, K, scheme, beta, seed)]
