"""Classification metrics, soft voting, per-split aggregation and the report table."""
from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import (
    LengthMismatchError,
    MissingColumnError,
    ShapeMismatchError,
    SingleClassError,
    UnevenSplitsError,
)

METRICS = ("macro_precision", "macro_recall", "roc_auc", "accuracy")
METRIC_HEADERS = {
    "macro_precision": "Macro Precision",
    "macro_recall": "Macro Recall",
    "roc_auc": "ROC AUC",
    "accuracy": "Accuracy",
}
MODEL_LABELS = {
    "knn-dtw": "KNN",
    "fcn-ts": "FCN-TS",
    "fcn-tsm": "FCN-TSM",
    "svm-poly": "SVM-Poly",
    "svm-rbf": "SVM-Rbf",
    "rf": "Random Forest",
    "extra-trees": "Extra Tree Boosting",
    "gbdt-x": "XGBoost",
    "gbdt-c": "CatBoost",
    "soft-ensemble": "Soft Ensemble",
}
ENSEMBLE_MEMBERS = ("extra-trees", "rf", "gbdt-x", "gbdt-c")


def confusion_metrics(y_true, y_pred):
    """Macro precision, macro recall and accuracy for binary labels.

    A class with no predicted (or no true) members contributes 0 to the
    macro precision (or recall).

    Examples
    --------
    >>> [round(v, 4) for v in confusion_metrics([1, 1, 0, 0], [1, 0, 0, 0])]
    [0.8333, 0.75, 0.75]
    """
    y_true = np.asarray(y_true).astype(np.int64)
    y_pred = np.asarray(y_pred).astype(np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.size == 0:
        raise LengthMismatchError("y_true and y_pred must be equal-length, non-empty vectors")
    precision, recall = [], []
    for c in (0, 1):
        tp = int(np.sum((y_pred == c) & (y_true == c)))
        pred_c = int(np.sum(y_pred == c))
        true_c = int(np.sum(y_true == c))
        precision.append(tp / pred_c if pred_c else 0.0)
        recall.append(tp / true_c if true_c else 0.0)
    accuracy = float(np.mean(y_true == y_pred))
    return (precision[0] + precision[1]) / 2, (recall[0] + recall[1]) / 2, accuracy


def roc_auc(y_true, scores):
    """Area under the ROC curve via the Mann-Whitney rank statistic.

    Tied scores share their average rank, which counts a tied
    positive/negative pair as one half.
    """
    y_true = np.asarray(y_true).astype(np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if y_true.shape != scores.shape:
        raise LengthMismatchError("labels and scores differ in length")
    pos = y_true == 1
    n_pos = int(pos.sum())
    n_neg = y_true.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("ROC AUC needs both classes")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def soft_ensemble(probas):
    """Element-wise mean of class-probability matrices."""
    probas = [np.asarray(p, dtype=np.float64) for p in probas]
    if not probas:
        raise ShapeMismatchError("no member probabilities")
    shape = probas[0].shape
    if len(shape) != 2 or shape[1] != 2 or any(p.shape != shape for p in probas):
        raise ShapeMismatchError(f"member shapes differ: {[p.shape for p in probas]}")
    return np.mean(probas, axis=0)


def proba_labels(proba):
    """Class 1 only when its probability strictly exceeds one half."""
    return (np.asarray(proba)[:, 1] > 0.5).astype(np.int64)


@dataclass(frozen=True)
class SplitResult:
    model: str
    split: int
    macro_precision: float
    macro_recall: float
    roc_auc: float
    accuracy: float

    def __post_init__(self):
        for m in METRICS:
            v = getattr(self, m)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{m}={v} outside [0, 1]")


def evaluate(model, split, y_true, scores, labels):
    """Build a :class:`SplitResult` from ranking scores and hard labels."""
    p, r, acc = confusion_metrics(y_true, labels)
    return SplitResult(model, int(split), p, r, roc_auc(y_true, scores), acc)


@dataclass(frozen=True)
class MetricTable:
    """Mean and sample standard deviation per (model, metric) on a 0-1 scale."""

    models: tuple
    mean: dict
    std: dict
    n_splits: int

    def cell(self, model, metric):
        return format_cell(self.mean[model, metric], self.std[model, metric])

    def to_markdown(self):
        head = "| Model | " + " | ".join(METRIC_HEADERS[m] for m in METRICS) + " |"
        sep = "|---|" + "---|" * len(METRICS)
        lines = [head, sep]
        for model in self.models:
            cells = " | ".join(self.cell(model, m) for m in METRICS)
            lines.append(f"| {MODEL_LABELS.get(model, model)} | {cells} |")
        return "\n".join(lines) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model"] + [METRIC_HEADERS[m] for m in METRICS])
        for model in self.models:
            w.writerow([MODEL_LABELS.get(model, model)] + [self.cell(model, m) for m in METRICS])
        return buf.getvalue()


def aggregate(results):
    """Collapse per-split results into a :class:`MetricTable`.

    Every model must have the same number (at least two) of splits. Models
    keep the order in which they first appear.
    """
    by_model = {}
    for r in results:
        by_model.setdefault(r.model, []).append(r)
    counts = {m: len(rs) for m, rs in by_model.items()}
    if not counts or len(set(counts.values())) != 1 or min(counts.values()) < 2:
        raise UnevenSplitsError(f"need an equal split count >= 2 per model, got {counts}")
    mean, std = {}, {}
    for model, rs in by_model.items():
        for m in METRICS:
            vals = np.array([getattr(r, m) for r in sorted(rs, key=lambda r: r.split)])
            mean[model, m] = float(vals.mean())
            # identical values must report exactly zero spread
            std[model, m] = 0.0 if np.all(vals == vals[0]) else float(vals.std(ddof=1))
    return MetricTable(tuple(by_model), mean, std, next(iter(counts.values())))


def format_cell(mean, std):
    """``mm.m ±s.ss`` on a percentage scale.

    >>> format_cell(0.85, 0.0707106781)
    '85.0 ±7.07'
    """
    return f"{100 * mean:.1f} ±{100 * std:.2f}"


_CELL = re.compile(r"^\s*(-?\d+(?:\.\d+)?)\s*±\s*(\d+(?:\.\d+)?)\s*$")


def parse_cell(text):
    """Inverse of :func:`format_cell`; returns percentages ``(mean, std)``."""
    m = _CELL.match(text)
    if not m:
        raise ValueError(f"not a 'mean ±std' cell: {text!r}")
    return float(m.group(1)), float(m.group(2))


def parse_markdown_row(line):
    """``'| name | a ±b | ... |'`` -> ``(name, [(mean, std), ...])``."""
    parts = [p.strip() for p in line.strip().strip("|").split("|")]
    return parts[0], [parse_cell(p) for p in parts[1:]]


def write_results_csv(results, path):
    """Long-form ``model,split,metric,value`` rows in the given order."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "split", "metric", "value"])
        for r in results:
            for m in METRICS:
                w.writerow([r.model, r.split, m, repr(float(getattr(r, m)))])


def read_results_csv(path):
    """Rebuild :class:`SplitResult` objects from a long-form CSV."""
    rows = {}
    order = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"model", "split", "metric", "value"} - set(reader.fieldnames or ())
        if missing:
            raise MissingColumnError(sorted(missing)[0])
        for rec in reader:
            key = (rec["model"], int(rec["split"]))
            if key not in rows:
                rows[key] = {}
                order.append(key)
            value = float(rec["value"])
            if not math.isfinite(value):
                raise ValueError(f"non-finite metric value for {key}")
            rows[key][rec["metric"]] = value
    return [SplitResult(model, split, **{m: rows[model, split][m] for m in METRICS})
            for model, split in order]
