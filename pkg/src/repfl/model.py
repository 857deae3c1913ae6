"""Softmax linear classifier and hinge-loss linear SVM.

The softmax model is the federated training core; the SVM is only used as a
separator for margin peeling in :mod:`repfl.risk`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from repfl.dataset import Dataset

LOG_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class LinearModel:
    """``C`` x ``d`` weights and a length-``C`` bias."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64, copy=True)
        b = np.array(self.b, dtype=np.float64, copy=True)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ValueError(f"incompatible shapes W{W.shape} b{b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("model parameters must be finite")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def C(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @classmethod
    def zeros(cls, C: int, d: int) -> "LinearModel":
        return cls(np.zeros((C, d)), np.zeros(C))

    def __eq__(self, other) -> bool:
        if not isinstance(other, LinearModel):
            return NotImplemented
        return np.array_equal(self.W, other.W) and np.array_equal(self.b, other.b)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.W.ravel(), self.b])

    @classmethod
    def from_flat(cls, v: np.ndarray, C: int, d: int) -> "LinearModel":
        return cls(v[: C * d].reshape(C, d), v[C * d :])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    reg_weight: float = 0.01
    local_steps: int = 1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not self.reg_weight >= 0:
            raise ValueError(f"reg_weight must be >= 0, got {self.reg_weight}")
        if self.local_steps < 1:
            raise ValueError(f"local_steps must be >= 1, got {self.local_steps}")


def _check_dims(model: LinearModel, X: np.ndarray) -> None:
    if X.shape[-1] != model.d:
        raise ValueError(f"feature dimension {X.shape[-1]} does not match model dimension {model.d}")


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_proba(model: LinearModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    _check_dims(model, X)
    return softmax(X @ model.W.T + model.b)


def predict(model: LinearModel, x: np.ndarray) -> Tuple[int, np.ndarray]:
    """Label (1-based, ties to the lowest class) and class probabilities for one sample."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("predict takes a single feature vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    p = predict_proba(model, x)
    return int(np.argmax(p)) + 1, p


def predict_labels(model: LinearModel, X: np.ndarray) -> np.ndarray:
    # argmax on logits, not probabilities: exp underflow would manufacture ties
    X = np.asarray(X, dtype=np.float64)
    _check_dims(model, X)
    return np.argmax(X @ model.W.T + model.b, axis=1) + 1


def _require_samples(data: Dataset) -> None:
    if data.n == 0:
        raise ValueError("empty dataset")


def mean_loss(model: LinearModel, data: Dataset) -> float:
    """Mean cross-entropy of the true labels, probabilities floored at 1e-12."""
    _require_samples(data)
    p = predict_proba(model, data.X)
    p_true = p[np.arange(data.n), data.y - 1]
    return float(-np.mean(np.log(np.maximum(p_true, LOG_FLOOR))))


def accuracy(model: LinearModel, data: Dataset) -> float:
    _require_samples(data)
    return float(np.mean(predict_labels(model, data.X) == data.y))


def loss_gradient_sum(model: LinearModel, data: Dataset) -> Tuple[np.ndarray, np.ndarray]:
    """Summed (not averaged) cross-entropy gradient w.r.t. ``W`` and ``b``."""
    p = predict_proba(model, data.X)
    p[np.arange(data.n), data.y - 1] -= 1.0
    return p.T @ data.X, p.sum(axis=0)


def sgd_step(model: LinearModel, data: Dataset, cfg: TrainConfig) -> LinearModel:
    """One full-batch step ``w - eta/n * (xi * w + sum_i grad f_i)``.

    The L2 term acts on ``W`` only; the bias is unregularized.
    """
    _require_samples(data)
    gW, gb = loss_gradient_sum(model, data)
    scale = cfg.learning_rate / data.n
    return LinearModel(model.W - scale * (cfg.reg_weight * model.W + gW), model.b - scale * gb)


def train_softmax(model: LinearModel, data: Dataset, cfg: TrainConfig, steps: int) -> LinearModel:
    for _ in range(steps):
        model = sgd_step(model, data, cfg)
    return model


def save_model(model: LinearModel, path: Union[str, Path, None] = None) -> str:
    lines = [f"dims {model.C} {model.d}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in model.W]
    lines.append(" ".join(f"{v:.17g}" for v in model.b))
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def parse_model(text: str) -> LinearModel:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    if len(head) != 3 or head[0] != "dims":
        raise ValueError("model text must start with 'dims C d'")
    C, d = int(head[1]), int(head[2])
    if len(lines) != C + 2:
        raise ValueError(f"expected {C + 2} lines, got {len(lines)}")
    W = np.array([[float(v) for v in ln.split()] for ln in lines[1 : C + 1]])
    b = np.array([float(v) for v in lines[C + 1].split()])
    if W.shape != (C, d) or b.shape != (C,):
        raise ValueError("model text does not match its declared dims")
    return LinearModel(W, b)


def load_model(path: Union[str, Path]) -> LinearModel:
    return parse_model(Path(path).read_text(encoding="utf-8"))


# --- hinge-loss SVM -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SvmSeparator:
    w: np.ndarray
    b: float

    def decision(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.w + self.b


def _signed(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.abs(y) == 1):
        raise ValueError("SVM labels must be +1 or -1")
    return y


def hinge_objective(w: np.ndarray, b, X: np.ndarray, y: np.ndarray, lam: float):
    """``lam/2 |w|^2 + mean(max(0, 1 - y (w.x + b)))``; vectorizes over columns of ``w``."""
    margins = y * (X @ w + b)
    return 0.5 * lam * np.sum(w * w, axis=0) + np.mean(np.maximum(0.0, 1.0 - margins), axis=0)


def hinge_subgradient(w: np.ndarray, b, X: np.ndarray, y: np.ndarray, lam: float):
    """Subgradient of :func:`hinge_objective`; at the kink the hinge contributes nothing.

    ``w`` may be ``(d,)`` with scalar ``b`` and ``y`` of shape ``(n,)``, or
    ``(d, m)`` with ``b`` of shape ``(m,)`` and ``y`` of shape ``(n, m)`` for
    ``m`` separators trained at once.
    """
    n = X.shape[0]
    margins = y * (X @ w + b)
    active = (margins < 1.0) * y
    gw = lam * w - X.T @ active / n
    gb = -active.sum(axis=0) / n
    return gw, gb


def fit_hinge(X: np.ndarray, Y: np.ndarray, epochs: int, lr: float, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    """Full-batch subgradient descent for ``m`` separators (columns of ``Y``).

    Steps decay as ``lr / sqrt(t + 1)``; the best iterate per column is kept,
    so the result never scores worse than the zero separator it starts from.
    """
    n, d = X.shape
    m = Y.shape[1]
    w = np.zeros((d, m))
    b = np.zeros(m)
    best_w, best_b = w.copy(), b.copy()
    best_obj = np.full(m, np.inf)
    for t in range(epochs + 1):
        # margins of the current iterate serve both the objective and the next step
        margins = Y * (X @ w + b)
        obj = 0.5 * lam * np.sum(w * w, axis=0) + np.mean(np.maximum(0.0, 1.0 - margins), axis=0)
        better = obj < best_obj
        best_obj = np.where(better, obj, best_obj)
        best_w[:, better] = w[:, better]
        best_b[better] = b[better]
        if t == epochs:
            break
        active = (margins < 1.0) * Y
        step = lr / np.sqrt(t + 1.0)
        w = w - step * (lam * w - X.T @ active / n)
        b = b + step * active.sum(axis=0) / n
    return best_w, best_b


def train_binary_svm(X: np.ndarray, y: np.ndarray, epochs: int = 300, lr: float = 0.5, lam: float = 0.01) -> SvmSeparator:
    """Linear SVM on ``+1/-1`` labels via hinge subgradient descent."""
    X = np.asarray(X, dtype=np.float64)
    y = _signed(y)
    if np.all(y == y[0]):
        raise ValueError("SVM training needs both classes present")
    w, b = fit_hinge(X, y[:, None], epochs, lr, lam)
    return SvmSeparator(w[:, 0], float(b[0]))


def support_indices(sep: SvmSeparator, X: np.ndarray, y: np.ndarray, tol: float = 1e-3) -> np.ndarray:
    """Indices on or inside the margin, ``y (w.x + b) <= 1 + tol``.

    Never empty for non-empty input: when no point qualifies, the single point
    closest to the hyperplane is returned so that peeling always progresses.
    """
    if tol < 0:
        raise ValueError(f"tol must be >= 0, got {tol}")
    y = _signed(y)
    if y.size == 0:
        return np.empty(0, dtype=np.int64)
    f = sep.decision(X)
    idx = np.flatnonzero(y * f <= 1.0 + tol)
    if idx.size == 0:
        idx = np.array([int(np.argmin(np.abs(f)))])
    return idx


def ovr_support_indices(X: np.ndarray, labels: np.ndarray, classes: List[int], epochs: int, lr: float, lam: float,
                        tol: float) -> np.ndarray:
    """Union of support sets of one-vs-rest separators, one per listed class."""
    Y = np.where(labels[:, None] == np.asarray(classes)[None, :], 1.0, -1.0)
    W, B = fit_hinge(X, Y, epochs, lr, lam)
    chosen = set()
    for j in range(len(classes)):
        sep = SvmSeparator(W[:, j], float(B[j]))
        chosen.update(support_indices(sep, X, Y[:, j], tol).tolist())
    return np.array(sorted(chosen), dtype=np.int64)
