"""Dynamic batch balancing: per-batch, per-class loss factors.

For every class the batch splits into positive and negative example
sets.  A class with no positives contributes nothing; a class whose
positives are outnumbered has its loss scaled up by batch_size over
positive count.  The per-class loss is the mean-square error over each
set separately, optionally with a dataset-level class weight on the
positive term.  Balancing is a training-time device only; evaluation
never applies these factors.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ShapeError, ValidationError

# Smoothed targets are positive on any temporal presence; they are 0
# exactly when a class appears in no frame of the clip.
DEFAULT_POSITIVE_THRESHOLD = 0.0


@dataclass
class BatchClassStats:
    batch_size: int
    pos_counts: np.ndarray  # (C,) ints
    neg_counts: np.ndarray  # (C,) ints


@dataclass
class ClassLossDetail:
    """One class's contribution to a batch loss, for diagnostic logs."""

    class_index: int
    pos_count: int
    neg_count: int
    factor: float
    weight: float
    loss: float


def positive_mask(targets: np.ndarray, threshold: float = DEFAULT_POSITIVE_THRESHOLD) -> np.ndarray:
    """Example b counts as positive for class c iff target[b, c] > threshold."""
    targets = np.asarray(targets, dtype=float)
    if targets.min() < 0.0 or targets.max() > 1.0:
        raise ValidationError(
            f"targets must lie in [0, 1], got range "
            f"[{targets.min()}, {targets.max()}]"
        )
    return targets > threshold


def batch_class_stats(mask: np.ndarray) -> BatchClassStats:
    mask = np.asarray(mask, dtype=bool)
    pos = mask.sum(axis=0)
    return BatchClassStats(mask.shape[0], pos, mask.shape[0] - pos)


def loss_factor(stats: BatchClassStats, class_index: int) -> float:
    """0 with no positives; 1 when positives hold the majority; otherwise
    batch_size over positive count."""
    pos = int(stats.pos_counts[class_index])
    neg = int(stats.neg_counts[class_index])
    if pos == 0:
        return 0.0
    if pos >= neg:
        return 1.0
    return stats.batch_size / pos


def class_weights(
    targets: np.ndarray | Sequence,
    threshold: float = DEFAULT_POSITIVE_THRESHOLD,
) -> np.ndarray:
    """Dataset-level weight per class: total positives over own positives.

    Accepts an (N, C) target matrix or anything with a smoothed_matrix()
    view (a clip set).  Classes with no positives get weight 0 and are
    skipped by the weighted loss term.
    """
    if hasattr(targets, "smoothed_matrix"):
        targets = targets.smoothed_matrix()
    targets = np.asarray(targets, dtype=float)
    if targets.ndim != 2:
        raise ShapeError(f"targets must be (examples, classes), got {targets.shape}")
    counts = (targets > threshold).sum(axis=0)
    grand_total = counts.sum()
    if grand_total == 0:
        raise ValidationError("no positive examples in the whole dataset")
    return np.where(counts > 0, grand_total / np.maximum(counts, 1), 0.0)


def batch_loss(
    predictions: np.ndarray,
    targets: np.ndarray,
    threshold: float = DEFAULT_POSITIVE_THRESHOLD,
    weights: np.ndarray | None = None,
    dynamic: bool = True,
    factor_positive_only: bool = False,
) -> tuple[float, np.ndarray, list[ClassLossDetail]]:
    """Total batch loss, its gradient w.r.t. predictions, and per-class detail.

    dynamic=True sums factor-scaled per-set mean-square errors over the
    classes.  By default the factor multiplies the positive and negative
    terms alike; ``factor_positive_only`` restricts it to the positive
    term.  dynamic=False is the unbalanced baseline: plain per-class MSE
    over the whole batch, summed over classes.
    """
    pred = np.asarray(predictions, dtype=float)
    tgt = np.asarray(targets, dtype=float)
    if pred.shape != tgt.shape or pred.ndim != 2:
        raise ShapeError(
            f"predictions {pred.shape} and targets {tgt.shape} must be equal (B, C)"
        )
    if not np.isfinite(pred).all() or not np.isfinite(tgt).all():
        bad = [
            c
            for c in range(pred.shape[1])
            if not (np.isfinite(pred[:, c]).all() and np.isfinite(tgt[:, c]).all())
        ]
        raise ValidationError(f"non-finite values in classes {bad}; aborting")
    batch_size, n_classes = pred.shape
    diff = pred - tgt

    if not dynamic:
        loss = float((diff**2).mean(axis=0).sum())
        grad = 2.0 * diff / batch_size
        details = [
            ClassLossDetail(c, batch_size, 0, 1.0, 1.0, float((diff[:, c] ** 2).mean()))
            for c in range(n_classes)
        ]
        return loss, grad, details

    mask = positive_mask(tgt, threshold)
    stats = batch_class_stats(mask)
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (n_classes,):
            raise ShapeError(f"weights shape {weights.shape}, expected ({n_classes},)")

    total = 0.0
    grad = np.zeros_like(pred)
    details: list[ClassLossDetail] = []
    for c in range(n_classes):
        pos = int(stats.pos_counts[c])
        neg = int(stats.neg_counts[c])
        factor = loss_factor(stats, c)
        w = 1.0 if weights is None else float(weights[c])
        if factor == 0.0 or w == 0.0:
            details.append(ClassLossDetail(c, pos, neg, factor, w, 0.0))
            continue
        pos_rows = mask[:, c]
        pos_term = float((diff[pos_rows, c] ** 2).mean())
        neg_term = float((diff[~pos_rows, c] ** 2).mean()) if neg else 0.0
        pos_scale = factor * w
        neg_scale = 1.0 if factor_positive_only else factor
        class_loss = pos_scale * pos_term + neg_scale * neg_term
        grad[pos_rows, c] = pos_scale * 2.0 * diff[pos_rows, c] / pos
        if neg:
            grad[~pos_rows, c] = neg_scale * 2.0 * diff[~pos_rows, c] / neg
        total += class_loss
        details.append(ClassLossDetail(c, pos, neg, factor, w, class_loss))
    return total, grad, details


def write_batch_log(
    path: str | Path,
    rows: Sequence[tuple[int, Sequence[ClassLossDetail]]],
    class_names: Sequence[str] | None = None,
) -> None:
    """Per-batch, per-class diagnostic CSV: step, class, pos, neg, F, W, loss."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "class", "pos", "neg", "factor", "weight", "loss"])
        for step, details in rows:
            for d in details:
                name = class_names[d.class_index] if class_names else str(d.class_index)
                writer.writerow(
                    [step, name, d.pos_count, d.neg_count,
                     format(d.factor, ".10g"), format(d.weight, ".10g"),
                     format(d.loss, ".10g")]
                )
