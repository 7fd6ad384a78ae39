"""Prediction and metrics: micro-F1 and the confusion matrix.

Micro-F1 pools true positives, false positives, and false negatives over all
classes: ``sum(TP) / (sum(TP) + 0.5 * (sum(FP) + sum(FN)))``. For single-label
multiclass predictions every error is simultaneously one FP and one FN, so
micro-F1 reduces to plain accuracy; the tests pin that identity against an
independent computation.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyInputError, LengthMismatchError
from .models import ModelGraph


def predict(model: ModelGraph, x, batch_size: int = 512) -> np.ndarray:
    """Most probable class index per example; ties go to the lowest index."""
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[None, :]
    parts = []
    for start in range(0, len(x), batch_size):
        probs = model.forward(x[start : start + batch_size]).class_probs
        parts.append(np.argmax(probs, axis=1))
    if not parts:
        return np.zeros(0, dtype=int)
    return np.concatenate(parts)


def _check_pair(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise LengthMismatchError(
            f"prediction shape {pred.shape} does not match truth {truth.shape}"
        )
    if pred.size == 0:
        raise EmptyInputError("cannot score zero predictions")
    return pred.astype(int), truth.astype(int)


def confusion(pred, truth, num_classes: int | None = None) -> np.ndarray:
    """Count matrix with rows = truth, columns = prediction."""
    pred, truth = _check_pair(pred, truth)
    if num_classes is None:
        num_classes = int(max(pred.max(), truth.max())) + 1
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (truth, pred), 1)
    return counts


def micro_f1(pred, truth) -> float:
    """Micro-averaged F1 over globally pooled TP/FP/FN."""
    matrix = confusion(pred, truth)
    tp = np.trace(matrix)
    fp = matrix.sum(axis=0) - np.diag(matrix)
    fn = matrix.sum(axis=1) - np.diag(matrix)
    denominator = tp + 0.5 * (fp.sum() + fn.sum())
    return float(tp / denominator)
