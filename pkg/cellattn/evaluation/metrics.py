"""Classification metric suite and ROC curves."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np
from sklearn import metrics as skm

from cellattn.utils import DataIOError, InputError, PathLikeStr, ensure_dir


_logger = logging.getLogger("cellattn.evaluation")

METRIC_NAMES: tuple[str, ...] = (
    "recall",
    "precision",
    "f1_sample",
    "f1_macro",
    "f1_micro",
    "f1_weight",
    "auc_macro",
    "auc_micro",
    "auc_weight",
)

# Row labels of the summary tables, same order as METRIC_NAMES.
TABLE_LABELS: dict[str, str] = {
    "recall": "Recall",
    "precision": "Precision",
    "f1_sample": "F1 sample",
    "f1_macro": "F1 macro",
    "f1_micro": "F1 micro",
    "f1_weight": "F1 weight",
    "auc_macro": "AUC-ROC macro",
    "auc_micro": "AUC-ROC micro",
    "auc_weight": "AUC-ROC weight",
}

ROW_SUM_TOLERANCE = 1e-4


@dataclass(frozen=True)
class MetricsReport:
    """Metrics of one evaluation.

    Recall and precision are macro averages over both classes. AUC fields are
    ``None`` when the label set holds a single class and the ROC is undefined.
    """

    recall: float
    precision: float
    f1_sample: float
    f1_macro: float
    f1_micro: float
    f1_weight: float
    auc_macro: float | None
    auc_micro: float | None
    auc_weight: float | None
    n_samples: int = 0

    def get(self, name: str) -> float | None:
        if name not in METRIC_NAMES:
            msg = f"Unknown metric {name!r}; expected one of {', '.join(METRIC_NAMES)}"
            raise InputError(msg)
        return getattr(self, name)

    @property
    def auc_defined(self) -> bool:
        return self.auc_macro is not None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> MetricsReport:
        try:
            keys = (*METRIC_NAMES, "n_samples")
            return cls(**{k: data[k] for k in keys if k in data})
        except TypeError as e:
            msg = f"Incomplete metrics record: {e}"
            raise InputError(msg) from e


def _check_predictions(probs: np.ndarray, labels: np.ndarray) -> None:
    if probs.ndim != 2 or probs.shape[1] != 2:
        msg = f"expected (N, 2) class probabilities, got {probs.shape}"
        raise InputError(msg)
    if len(probs) == 0:
        msg = "cannot compute metrics on zero samples"
        raise InputError(msg)
    if labels.shape != (len(probs),):
        msg = f"{len(probs)} predictions but labels of shape {labels.shape}"
        raise InputError(msg)
    if not np.all(np.isin(labels, (0, 1))):
        msg = f"labels must be 0 or 1, got {sorted(set(labels.tolist()))}"
        raise InputError(msg)
    if not np.all(np.isfinite(probs)):
        msg = "probabilities contain NaN or Inf"
        raise InputError(msg)
    worst = float(np.max(np.abs(probs.sum(axis=1) - 1.0)))
    if worst > ROW_SUM_TOLERANCE:
        msg = f"probability rows must sum to 1 (max deviation {worst:.3g})"
        raise InputError(msg)


def compute_metrics(probs: np.ndarray, labels: np.ndarray) -> MetricsReport:
    """Score ``(N, 2)`` class probabilities against integer labels.

    Hard predictions are the row argmax. ``macro`` is the unweighted class
    mean, ``micro`` pools global counts, ``weight`` weights classes by
    support and ``sample`` averages per-sample F1 over one-hot indicators.
    AUC variants use the per-class score columns against one-hot labels.

    Raises:
        InputError: Shapes disagree, labels are not binary or rows do not
            sum to one.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    _check_predictions(probs, labels)
    preds = probs.argmax(axis=1)
    classes = [0, 1]
    truth = np.eye(2, dtype=np.int64)[labels]
    hard = np.eye(2, dtype=np.int64)[preds]

    def score(fn: Any, average: str) -> float:
        value = fn(labels, preds, labels=classes, average=average, zero_division=0)
        return float(value)

    if len(np.unique(labels)) < 2:
        _logger.debug("Single-class label set: AUC undefined")
        aucs: dict[str, float | None] = {"macro": None, "micro": None, "weighted": None}
    else:
        aucs = {
            avg: float(skm.roc_auc_score(truth, probs, average=avg))
            for avg in ("macro", "micro", "weighted")
        }
    return MetricsReport(
        recall=score(skm.recall_score, "macro"),
        precision=score(skm.precision_score, "macro"),
        f1_sample=float(skm.f1_score(truth, hard, average="samples", zero_division=0)),
        f1_macro=score(skm.f1_score, "macro"),
        f1_micro=score(skm.f1_score, "micro"),
        f1_weight=score(skm.f1_score, "weighted"),
        auc_macro=aucs["macro"],
        auc_micro=aucs["micro"],
        auc_weight=aucs["weighted"],
        n_samples=len(labels),
    )


@dataclass(frozen=True)
class ROCCurve:
    """Receiver operating characteristic of one class, one point per threshold."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    cls: int
    auc: float

    def rows(self) -> list[tuple[float, float, float]]:
        return [
            (float(f), float(t), float(h))
            for f, t, h in zip(self.fpr, self.tpr, self.thresholds, strict=True)
        ]

    def write_csv(self, path: PathLikeStr) -> Path:
        """Write ``fpr,tpr,threshold`` rows."""
        target = Path(path)
        ensure_dir(target.parent)
        try:
            with target.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["fpr", "tpr", "threshold"])
                writer.writerows(self.rows())
        except OSError as e:
            msg = f"Cannot write ROC curve to {target}: {e}"
            raise DataIOError(msg) from e
        return target


def roc_curve(scores: np.ndarray, labels: np.ndarray, cls: int = 1) -> ROCCurve:
    """ROC of class ``cls`` over every distinct score.

    ``scores`` is either the class score vector or ``(N, 2)`` probabilities
    or logits, in which case column ``cls`` is used.

    Raises:
        InputError: Only one of positives and negatives is present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    if scores.ndim == 2:
        scores = scores[:, cls]
    if scores.shape != labels.shape:
        msg = f"scores {scores.shape} and labels {labels.shape} differ"
        raise InputError(msg)
    positive = labels == cls
    if positive.all() or not positive.any():
        msg = f"ROC for class {cls} needs both positive and negative samples"
        raise InputError(msg)
    fpr, tpr, thresholds = skm.roc_curve(positive, scores, drop_intermediate=False)
    return ROCCurve(fpr, tpr, thresholds, cls, float(skm.auc(fpr, tpr)))


__all__ = [
    "METRIC_NAMES",
    "ROW_SUM_TOLERANCE",
    "TABLE_LABELS",
    "MetricsReport",
    "ROCCurve",
    "compute_metrics",
    "roc_curve",
]
