"""Multi-label evaluation: confusion counts, precision/recall/F1, macro average.

Per-class scores follow the usual conventions for degenerate cases: any
0/0 ratio is 0.  The macro average skips classes that never occur in the
truth by default, since their F1 carries no information; a flag includes
them as zeros instead.  Micro-averaged scores are always emitted too.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ShapeError, ValidationError

DEFAULT_THRESHOLD = 0.5


@dataclass
class ConfusionCounts:
    tp: np.ndarray  # (C,) ints
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray


@dataclass
class MetricsReport:
    class_names: tuple[str, ...]
    threshold: float
    split: str
    tag: str
    counts: ConfusionCounts
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray  # truth-positive count per class
    macro_f1: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    include_zero_support: bool = False
    excluded_classes: tuple[str, ...] = field(default=())


def binarize(outputs: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """True where output >= threshold (boundary inclusive)."""
    if not 0.0 < threshold < 1.0:
        raise ValidationError(f"threshold must lie strictly in (0, 1), got {threshold}")
    return np.asarray(outputs, dtype=float) >= threshold


def confusion(pred: np.ndarray, truth: np.ndarray) -> ConfusionCounts:
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape or pred.ndim != 2:
        raise ShapeError(
            f"predictions {pred.shape} and truth {truth.shape} must be equal (B, C)"
        )
    tp = (pred & truth).sum(axis=0)
    fp = (pred & ~truth).sum(axis=0)
    fn = (~pred & truth).sum(axis=0)
    tn = (~pred & ~truth).sum(axis=0)
    return ConfusionCounts(tp, fp, fn, tn)


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return np.where(den > 0, num / np.maximum(den, 1), 0.0)


def prf1(counts: ConfusionCounts) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class precision, recall, and their harmonic mean; 0/0 -> 0."""
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    f1 = _ratio(2 * precision * recall, precision + recall)
    return precision, recall, f1


def macro_f1(
    f1: np.ndarray, support: np.ndarray, include_zero_support: bool = False
) -> float:
    """Unweighted mean of per-class F1, skipping unsupported classes by default."""
    f1 = np.asarray(f1, dtype=float)
    support = np.asarray(support)
    if f1.size == 0:
        raise ValidationError("need at least one class")
    if include_zero_support:
        return float(f1.mean())
    kept = support > 0
    if not kept.any():
        return 0.0
    return float(f1[kept].mean())


def compute_report(
    outputs: np.ndarray,
    truth: np.ndarray,
    class_names: Sequence[str],
    threshold: float = DEFAULT_THRESHOLD,
    split: str = "",
    tag: str = "",
    include_zero_support: bool = False,
) -> MetricsReport:
    """Binarize sigmoid outputs against binary truth and score every class."""
    truth = np.asarray(truth, dtype=bool)
    pred = binarize(outputs, threshold)
    if pred.shape[1] != len(class_names):
        raise ShapeError(
            f"{pred.shape[1]} output columns vs {len(class_names)} class names"
        )
    counts = confusion(pred, truth)
    precision, recall, f1 = prf1(counts)
    support = truth.sum(axis=0)
    micro_tp = counts.tp.sum()
    micro_p = float(_ratio(np.array(micro_tp), np.array(micro_tp + counts.fp.sum())))
    micro_r = float(_ratio(np.array(micro_tp), np.array(micro_tp + counts.fn.sum())))
    micro_f = 0.0 if micro_p + micro_r == 0 else 2 * micro_p * micro_r / (micro_p + micro_r)
    excluded = tuple(
        name
        for name, s in zip(class_names, support)
        if s == 0 and not include_zero_support
    )
    return MetricsReport(
        class_names=tuple(class_names),
        threshold=threshold,
        split=split,
        tag=tag,
        counts=counts,
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        macro_f1=macro_f1(f1, support, include_zero_support),
        micro_precision=micro_p,
        micro_recall=micro_r,
        micro_f1=micro_f,
        include_zero_support=include_zero_support,
        excluded_classes=excluded,
    )


def write_report_csv(report: MetricsReport, path: str | Path) -> None:
    """One row per class plus macro/micro summary rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["class", "support", "tp", "fp", "fn", "tn", "precision", "recall", "f1"]
        )
        for i, name in enumerate(report.class_names):
            writer.writerow(
                [
                    name,
                    int(report.support[i]),
                    int(report.counts.tp[i]),
                    int(report.counts.fp[i]),
                    int(report.counts.fn[i]),
                    int(report.counts.tn[i]),
                    format(report.precision[i], ".6f"),
                    format(report.recall[i], ".6f"),
                    format(report.f1[i], ".6f"),
                ]
            )
        writer.writerow(["macro_f1", "", "", "", "", "", "", "", format(report.macro_f1, ".6f")])
        writer.writerow(
            [
                "micro",
                "",
                "",
                "",
                "",
                "",
                format(report.micro_precision, ".6f"),
                format(report.micro_recall, ".6f"),
                format(report.micro_f1, ".6f"),
            ]
        )


def write_report_text(report: MetricsReport, path: str | Path) -> None:
    """Flat key = value summary, grep-friendly."""
    lines = [
        f"split = {report.split}",
        f"tag = {report.tag}",
        f"threshold = {report.threshold}",
        f"macro_f1 = {report.macro_f1:.6f}",
        f"micro_precision = {report.micro_precision:.6f}",
        f"micro_recall = {report.micro_recall:.6f}",
        f"micro_f1 = {report.micro_f1:.6f}",
        f"excluded_zero_support = {','.join(report.excluded_classes) or '-'}",
    ]
    for i, name in enumerate(report.class_names):
        lines.append(
            f"class[{name}] = p {report.precision[i]:.6f} r {report.recall[i]:.6f} "
            f"f1 {report.f1[i]:.6f} support {int(report.support[i])}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_comparison_csv(
    train_report: MetricsReport, test_report: MetricsReport, path: str | Path
) -> None:
    """Per-class train/test table: precision and recall side by side."""
    if train_report.class_names != test_report.class_names:
        raise ValidationError("train and test reports disagree on classes")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["class", "precision_train", "precision_test", "recall_train", "recall_test"]
        )
        for i, name in enumerate(train_report.class_names):
            writer.writerow(
                [
                    name,
                    format(train_report.precision[i], ".6f"),
                    format(test_report.precision[i], ".6f"),
                    format(train_report.recall[i], ".6f"),
                    format(test_report.recall[i], ".6f"),
                ]
            )
