"""Evaluation measures for the three tasks: categorical, AU, and VA."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .losses import ccc

log = logging.getLogger(__name__)


@dataclass
class ConfusionMatrix:
    """K x K count matrix: rows = ground truth, columns = prediction."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise DataError("confusion matrix must be square")
        if np.any(self.counts < 0):
            raise DataError("confusion matrix counts must be nonnegative")

    @classmethod
    def from_labels(cls, truth, pred, num_classes: int) -> "ConfusionMatrix":
        counts = np.zeros((num_classes, num_classes), dtype=int)
        for t, p in zip(truth, pred):
            counts[int(t), int(p)] += 1
        return cls(counts)


def _f1(precision, recall):
    return 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)


def classification_metrics(cm: ConfusionMatrix) -> dict:
    """Accuracy, per-class F1, macro F1, UAR, and mean row-normalized diagonal.

    Classes absent from the ground truth are excluded from UAR and mean_diag;
    the F1 zero-division convention is 0.
    """
    c = cm.counts.astype(float)
    total = c.sum()
    if total == 0:
        raise DataError("empty confusion matrix")
    k = c.shape[0]
    row = c.sum(axis=1)
    col = c.sum(axis=0)
    diag = np.diag(c)
    recalls = np.divide(diag, row, out=np.zeros(k), where=row > 0)
    precisions = np.divide(diag, col, out=np.zeros(k), where=col > 0)
    per_class_f1 = [_f1(precisions[i], recalls[i]) for i in range(k)]
    present = row > 0
    uar = float(recalls[present].mean())
    return {
        "accuracy": float(diag.sum() / total),
        "per_class_f1": [float(f) for f in per_class_f1],
        "macro_f1": float(np.mean(per_class_f1)),
        "uar": uar,
        "mean_diag": uar,  # mean of the row-normalized diagonal == mean per-class recall
    }


def au_metrics(predictions, truth, threshold: float = 0.5) -> dict:
    """Per-AU F1 and accuracy over annotated entries, plus their combined average.

    ``predictions`` holds probabilities (thresholded here) or hard labels;
    ``truth`` uses NaN for unannotated entries. AUs with no annotated entries
    are excluded from the means with a warning. ``afa`` = (mean F1 + mean acc)/2.
    """
    p = np.atleast_2d(np.asarray(predictions, dtype=float))
    t = np.atleast_2d(np.asarray(truth, dtype=float))
    if p.shape != t.shape:
        raise DataError("au_metrics: shape mismatch")
    hard = (p >= threshold).astype(float)
    n_aus = p.shape[1]
    per_f1, per_acc, scored = [], [], []
    for j in range(n_aus):
        mask = ~np.isnan(t[:, j])
        if not mask.any():
            log.warning("AU column %d has no annotated entries; excluded", j)
            per_f1.append(None)
            per_acc.append(None)
            continue
        yj, hj = t[mask, j], hard[mask, j]
        tp = float(np.sum((yj == 1) & (hj == 1)))
        fp = float(np.sum((yj == 0) & (hj == 1)))
        fn = float(np.sum((yj == 1) & (hj == 0)))
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        per_f1.append(_f1(precision, recall))
        per_acc.append(float(np.mean(yj == hj)))
        scored.append(j)
    if not scored:
        raise DataError("au_metrics: no annotated entries in any AU")
    mean_f1 = float(np.mean([per_f1[j] for j in scored]))
    mean_acc = float(np.mean([per_acc[j] for j in scored]))
    return {
        "per_au_f1": per_f1,
        "mean_f1": mean_f1,
        "per_au_accuracy": per_acc,
        "mean_accuracy": mean_acc,
        "afa": (mean_f1 + mean_acc) / 2.0,
    }


def va_metrics(truth, predictions) -> dict:
    """CCC per affect dimension and their mean."""
    t = np.asarray(truth, dtype=float)
    p = np.asarray(predictions, dtype=float)
    if t.ndim != 2 or t.shape[1] != 2 or t.shape != p.shape:
        raise DataError("va_metrics expects (n, 2) arrays")
    ccc_v = ccc(t[:, 0], p[:, 0])
    ccc_a = ccc(t[:, 1], p[:, 1])
    return {"ccc_v": ccc_v, "ccc_a": ccc_a, "mean_ccc": (ccc_v + ccc_a) / 2.0}
