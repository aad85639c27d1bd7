"""Accuracy and micro-averaged F1 for node classification."""

from __future__ import annotations

import numpy as np


class MetricError(ValueError):
    """Invalid metric arguments (empty mask, shape mismatch)."""


class MetricIdentityError(AssertionError):
    """micro-F1 diverged from accuracy on single-label data (pooling bug)."""


def confusion_matrix(predictions: np.ndarray, labels: np.ndarray,
                     num_classes: int) -> np.ndarray:
    """counts[i, j] = nodes with true class i predicted as class j."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (labels, predictions), 1)
    return counts


def micro_f1_from_confusion(counts: np.ndarray) -> float:
    """Pool per-class TP/FP/FN, then F1 = TP / (TP + (FP + FN)/2)."""
    counts = np.asarray(counts)
    tp = int(np.trace(counts))
    fp = int(counts.sum(axis=0).sum() - np.trace(counts))
    fn = int(counts.sum(axis=1).sum() - np.trace(counts))
    denom = tp + 0.5 * (fp + fn)
    if denom == 0:
        return 0.0
    return tp / denom


def compute_metrics(predictions: np.ndarray, labels: np.ndarray,
                    mask: np.ndarray) -> dict[str, float]:
    """Accuracy and micro-F1 over the masked nodes.

    Single-label multi-class pooling makes micro-F1 equal accuracy exactly;
    this is asserted on every call to catch pooling bugs.
    """
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise MetricError("metrics over an empty mask")
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    y = labels[mask]
    p = predictions[mask]
    if np.any(y < 0):
        raise MetricError("masked nodes must carry labels")
    num_classes = int(max(y.max(), p.max())) + 1
    accuracy = float(np.mean(p == y))
    micro_f1 = micro_f1_from_confusion(confusion_matrix(p, y, num_classes))
    if micro_f1 != accuracy:
        raise MetricIdentityError(
            f"micro-F1 {micro_f1!r} != accuracy {accuracy!r} on "
            f"single-label data")
    return {"accuracy": accuracy, "micro_f1": micro_f1}
