"""
asm2tv.analysis – evaluation metrics, DTW view profiles and gate clustering.

Public API
----------
    metrics(predictions, labels)            -> Metrics(acc, macro_f1, weighted_f1)
    ConfusionMatrix.from_predictions(...)
    dtw_distance(a, b)                      -> float
    view_dtw_profile(series_a, series_b)    -> per-view DTW between two tasks
    gate_cluster_score(gates, groups)       -> adjusted Rand index
"""

from __future__ import annotations
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from sklearn.metrics import adjusted_rand_score, confusion_matrix

from asm2tv.data import TaskSeries


@dataclass(frozen=True)
class Metrics:
    acc:         float
    macro_f1:    float
    weighted_f1: float

    def as_dict(self) -> dict[str, float]:
        return {"acc": self.acc, "macro_f1": self.macro_f1, "weighted_f1": self.weighted_f1}


def metrics(predictions, labels) -> Metrics:
    """
    Accuracy plus macro / weighted F1 from the confusion matrix.  Both F1
    averages run over the classes present in *labels*; a class with
    P + R = 0 scores 0.
    """
    y_pred = np.asarray(predictions, dtype=np.int64)
    y_true = np.asarray(labels, dtype=np.int64)
    if y_true.size == 0:
        raise ValueError("metrics of an empty prediction set")
    if y_pred.shape != y_true.shape:
        raise ValueError(f"{y_pred.size} predictions for {y_true.size} labels")
    if min(y_pred.min(), y_true.min()) < 0:
        raise ValueError("class ids must be non-negative")
    cm      = ConfusionMatrix.from_predictions(y_pred, y_true, int(max(y_pred.max(), y_true.max())) + 1)
    f1      = cm.per_class_f1()
    support = cm.counts.sum(axis=1)
    present = support > 0
    return Metrics(
        acc=cm.accuracy,
        macro_f1=float(f1[present].mean()),
        weighted_f1=float((f1 * support).sum() / cm.total),
    )


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray          # rows: true class, columns: predicted class

    @classmethod
    def from_predictions(cls, predictions, labels, n_classes: int) -> "ConfusionMatrix":
        cm = confusion_matrix(np.asarray(labels), np.asarray(predictions), labels=np.arange(n_classes))
        return cls(cm.astype(np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total)

    def per_class_f1(self) -> np.ndarray:
        tp = np.diag(self.counts).astype(np.float64)
        fp = self.counts.sum(axis=0) - tp
        fn = self.counts.sum(axis=1) - tp
        denom = 2 * tp + fp + fn
        return np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)


# -------------------------------------------------- #
# dynamic time warping
# -------------------------------------------------- #
def dtw_distance(a, b) -> float:
    """
    Unconstrained DTW with |a_i - b_j| local cost and both endpoints matched.

    The cumulative table is filled one anti-diagonal at a time; each cell
    is cost + min(up, left, diagonal), same as the row-by-row recurrence.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("dtw_distance needs two nonempty series")
    n, m = a.size, b.size
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for s in range(2, n + m + 1):
        i = np.arange(max(1, s - m), min(n, s - 1) + 1)
        j = s - i
        best = np.minimum(np.minimum(acc[i - 1, j], acc[i, j - 1]), acc[i - 1, j - 1])
        acc[i, j] = np.abs(a[i - 1] - b[j - 1]) + best
    return float(acc[n, m])


def summary_series(x: np.ndarray, znorm: bool = True, max_len: int | None = None) -> np.ndarray:
    """Channel-mean of an (n, channels) series, optionally z-normalised and downsampled."""
    s = np.asarray(x, dtype=np.float64)
    s = s.mean(axis=1) if s.ndim == 2 else s
    if znorm:
        sd = s.std()
        s  = (s - s.mean()) / sd if sd > 0 else s - s.mean()
    if max_len is not None and s.size > max_len:
        s = s[np.linspace(0, s.size - 1, max_len).round().astype(np.int64)]
    return s


def view_dtw_profile(
    series_a: TaskSeries,
    series_b: TaskSeries,
    *,
    znorm: bool = True,
    max_len: int | None = 512,
) -> list[float]:
    """DTW between the channel-mean series of two tasks, one value per view."""
    if len(series_a.views) != len(series_b.views):
        raise ValueError("both tasks must carry the same views")
    return [
        dtw_distance(summary_series(va, znorm, max_len), summary_series(vb, znorm, max_len))
        for va, vb in zip(series_a.views, series_b.views)
    ]


def read_series_file(path: str | Path, label_column: str = "label") -> np.ndarray:
    """Channel columns of one series CSV as an (n, channels) array."""
    frame = pd.read_csv(path, float_precision="round_trip")
    cols  = [c for c in frame.columns if c not in ("ts_ms", label_column)]
    if not cols:
        raise ValueError(f"{path}: no channel columns")
    return frame[cols].to_numpy(dtype=np.float64)


# -------------------------------------------------- #
# gate clustering
# -------------------------------------------------- #
def view_assignment(gates, n_views: int) -> np.ndarray:
    """
    Block per view from a gate-probability matrix.  Per-task-view matrices
    (T*V rows, task-major) are reduced by majority over tasks; ties go to
    the lowest block id.
    """
    probs = gates.drop(columns="unit").to_numpy() if isinstance(gates, pd.DataFrame) else np.asarray(gates)
    if probs.shape[0] == n_views:
        return np.argmax(probs, axis=1)
    if probs.shape[0] % n_views:
        raise ValueError(f"{probs.shape[0]} gate rows do not fit {n_views} views")
    picks = np.argmax(probs, axis=1).reshape(-1, n_views)
    return np.array([np.bincount(picks[:, v], minlength=probs.shape[1]).argmax() for v in range(n_views)])


def gate_cluster_score(gates, planted_groups: Sequence[int]) -> float:
    """Adjusted Rand index between learned view->block routing and planted groups."""
    planted = np.asarray(planted_groups)
    learned = view_assignment(gates, planted.size)
    if learned.size != planted.size:
        raise ValueError(f"{learned.size} assigned views vs {planted.size} planted")
    return float(adjusted_rand_score(planted, learned))
