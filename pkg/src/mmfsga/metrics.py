"""Classification and feature-recovery metrics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata


def confusion_matrix(y_true, y_pred, n_classes: Optional[int] = None) -> np.ndarray:
    """``C x C`` count matrix; rows are true classes, columns predictions."""
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    if n_classes is None:
        n_classes = int(max(y_true.max(initial=-1), y_pred.max(initial=-1))) + 1
    flat = y_true * n_classes + y_pred
    return np.bincount(flat, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def per_class_tpf(y_true, y_pred, n_classes: Optional[int] = None) -> np.ndarray:
    """Recall (true-positive fraction) of every class."""
    cm = confusion_matrix(y_true, y_pred, n_classes)
    support = cm.sum(axis=1)
    present = np.unique(np.asarray(y_true, dtype=int))
    if n_classes is not None and present.size < n_classes:
        missing = sorted(set(range(n_classes)) - set(present.tolist()))
        raise ValueError(f"class(es) {missing} have no true samples")
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.diag(cm) / support


def balanced_accuracy(y_true, y_pred, n_classes: Optional[int] = None) -> float:
    """Mean per-class recall over the classes present in ``y_true``.

    Pass ``n_classes`` to insist that every class ``0..n_classes-1`` occurs.
    """
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.size == 0:
        raise ValueError("balanced accuracy of an empty label vector")
    tpf = per_class_tpf(y_true, y_pred, n_classes)
    return float(np.nanmean(tpf))


def sensitivity_specificity(y_true, y_pred) -> tuple[float, float]:
    """Binary TPF and TNF with class 1 as the positive class."""
    cm = confusion_matrix(y_true, y_pred, 2)
    tn, fp, fn, tp = cm.ravel()
    if tp + fn == 0 or tn + fp == 0:
        raise ValueError("both classes must be present")
    return tp / (tp + fn), tn / (tn + fp)


def auc_binary(y_true, scores) -> float:
    """ROC area as the probability that a positive outscores a negative.

    Ties count one half. Class 1 is the positive class.
    """
    y_true = np.asarray(y_true, dtype=int)
    scores = np.asarray(scores, dtype=float)
    pos = y_true == 1
    n_pos = int(pos.sum())
    n_neg = y_true.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auc_multiclass_ova(y_true, class_scores) -> float:
    """Class-size weighted mean of one-vs-rest AUCs.

    Args:
        y_true: Integer labels ``0..C-1``.
        class_scores: ``(n, C)`` per-class scores (e.g. probabilities).
    """
    y_true = np.asarray(y_true, dtype=int)
    class_scores = np.asarray(class_scores, dtype=float)
    n_classes = class_scores.shape[1]
    counts = np.bincount(y_true, minlength=n_classes)
    if np.any(counts == 0):
        raise ValueError(f"class(es) {np.flatnonzero(counts == 0).tolist()} absent from y_true")
    aucs = np.array([auc_binary(y_true == c, class_scores[:, c]) for c in range(n_classes)])
    return float(np.sum(counts * aucs) / counts.sum())


def roc_points(y_true, scores) -> tuple[np.ndarray, np.ndarray]:
    """(FPF, TPF) points of the empirical ROC curve, from (0, 0) to (1, 1)."""
    y_true = np.asarray(y_true, dtype=int)
    scores = np.asarray(scores, dtype=float)
    thresholds = np.unique(scores)[::-1]
    pos = y_true == 1
    n_pos, n_neg = pos.sum(), (~pos).sum()
    tpf = [0.0]
    fpf = [0.0]
    for t in thresholds:
        hit = scores >= t
        tpf.append((hit & pos).sum() / n_pos)
        fpf.append((hit & ~pos).sum() / n_neg)
    return np.array(fpf), np.array(tpf)


def feature_f1(selected_mask, informative_mask) -> float:
    """F1 agreement between a selected and a ground-truth feature set."""
    sel = np.asarray(selected_mask, dtype=bool)
    inf = np.asarray(informative_mask, dtype=bool)
    if sel.shape != inf.shape:
        raise ValueError("masks differ in length")
    tp = np.sum(sel & inf)
    fp = np.sum(sel & ~inf)
    fn = np.sum(~sel & inf)
    denom = tp + 0.5 * (fp + fn)
    return float(tp / denom) if denom else 0.0


@dataclass
class EvaluationReport:
    """Test-set evaluation of one selected feature set."""

    balanced_accuracy: float
    auc: float
    confusion: np.ndarray
    sensitivity: Optional[float] = None
    specificity: Optional[float] = None
    per_class_tpf: Optional[list[float]] = None
    feature_f1: dict[str, float] = field(default_factory=dict)
    selected_counts: dict[str, int] = field(default_factory=dict)

    def as_dict(self) -> dict[str, object]:
        out: dict[str, object] = {
            "balanced_accuracy": self.balanced_accuracy,
            "auc": self.auc,
        }
        if self.sensitivity is not None:
            out["sensitivity"] = self.sensitivity
            out["specificity"] = self.specificity
        if self.per_class_tpf is not None:
            for c, v in enumerate(self.per_class_tpf):
                out[f"tpf_class{c}"] = v
        for name, v in self.feature_f1.items():
            out[f"feature_f1.{name}"] = v
        for name, v in self.selected_counts.items():
            out[f"selected.{name}"] = v
        n = self.confusion.shape[0]
        for i in range(n):
            for j in range(n):
                out[f"confusion.{i}.{j}"] = int(self.confusion[i, j])
        return out

    def to_text(self) -> str:
        """Flat ``key = value`` record, one entry per line."""
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.as_dict().items())

    def to_csv(self) -> str:
        buf = io.StringIO()
        row = self.as_dict()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(row.keys())
        writer.writerow(_fmt(v) for v in row.values())
        return buf.getvalue()


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(round(value, 12))
    return str(value)


def evaluation_report(
    y_true,
    y_pred,
    scores,
    n_classes: int,
    selected_masks: Optional[dict[str, np.ndarray]] = None,
    informative_masks: Optional[dict[str, np.ndarray]] = None,
) -> EvaluationReport:
    """Assemble an :class:`EvaluationReport`.

    ``scores`` are signed decision values for binary tasks and an ``(n, C)``
    probability matrix otherwise.
    """
    cm = confusion_matrix(y_true, y_pred, n_classes)
    bal = balanced_accuracy(y_true, y_pred, n_classes)
    report = EvaluationReport(balanced_accuracy=bal, auc=float("nan"), confusion=cm)
    if n_classes == 2:
        report.auc = auc_binary(y_true, scores)
        report.sensitivity, report.specificity = map(float, sensitivity_specificity(y_true, y_pred))
    else:
        report.auc = auc_multiclass_ova(y_true, scores)
        report.per_class_tpf = [float(v) for v in per_class_tpf(y_true, y_pred, n_classes)]
    for name, mask in (selected_masks or {}).items():
        report.selected_counts[name] = int(np.count_nonzero(mask))
        if informative_masks and name in informative_masks:
            report.feature_f1[name] = feature_f1(mask, informative_masks[name])
    return report


def summarize(values: Sequence[float]) -> tuple[float, float]:
    """Mean and population standard deviation, as reported in result tables."""
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())
