"""Evaluation: precision/recall, average precision, confusion matrices,
and the VAD/OSD reductions of 3-class predictions.

AP uses the step-wise estimator sum_n (R_n - R_{n-1}) * P_n over descending
unique score thresholds (tied scores share a threshold); no interpolation
between PR points. The 3-class mAP is the macro mean of the one-vs-rest
APs, an extension beyond the binary reductions and labeled as such in
reports. Confusion matrices are row-normalized to the ground truth in
percent; a true class with no samples gets a NaN row rather than a guess.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

NUM_CLASSES = 3
TASKS = ("csd", "vad", "osd")
CLASS_NAMES = ("0", "1", "2")


def reduce_to_task(probs: np.ndarray, labels: np.ndarray, task: str):
    """Binary (scores, labels) for a reduction task.

    vad: positive = any speech, score p1 + p2, label y != 0.
    osd: positive = overlap, score p2, label y == 2.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or probs.shape[1] != NUM_CLASSES or len(probs) != len(labels):
        raise ContractError("reduce_to_task needs aligned (M, 3) probs and M labels")
    if task == "vad":
        return probs[:, 1] + probs[:, 2], (labels != 0).astype(np.int64)
    if task == "osd":
        return probs[:, 2].copy(), (labels == 2).astype(np.int64)
    raise ContractError(f"unknown reduction task {task!r}; expected 'vad' or 'osd'")


def reduce_predictions(preds: np.ndarray, task: str) -> np.ndarray:
    """Hard 3-class predictions mapped to the binary task's positive class."""
    preds = np.asarray(preds, dtype=np.int64)
    if task == "vad":
        return (preds != 0).astype(np.int64)
    if task == "osd":
        return (preds == 2).astype(np.int64)
    raise ContractError(f"unknown reduction task {task!r}; expected 'vad' or 'osd'")


def pr_curve(scores: np.ndarray, labels: np.ndarray):
    """Precision/recall at each descending unique score threshold.

    Returns (precision, recall, thresholds); tied scores share a threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ContractError("pr_curve needs aligned 1-D scores and binary labels")
    positives = int(labels.sum())
    if positives == 0:
        raise ContractError("average precision is undefined without positive labels")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    # last index of each tied block = cumulative counts at that threshold
    distinct = np.flatnonzero(np.diff(sorted_scores) != 0.0)
    block_ends = np.append(distinct, len(sorted_scores) - 1)
    tp = np.cumsum(sorted_labels)[block_ends].astype(np.float64)
    predicted = (block_ends + 1).astype(np.float64)
    precision = tp / predicted
    recall = tp / positives
    return precision, recall, sorted_scores[block_ends]


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """Step-wise AP: sum of (R_n - R_{n-1}) * P_n over the threshold sweep."""
    precision, recall, _ = pr_curve(scores, labels)
    prev = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev) * precision))


def confusion_matrix(pred: np.ndarray, truth: np.ndarray,
                     num_classes: int = NUM_CLASSES) -> np.ndarray:
    """Ground-truth-row-normalized confusion in percent; empty rows are NaN."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ContractError("confusion_matrix needs aligned 1-D predictions and truths")
    out = np.full((num_classes, num_classes), np.nan)
    for i in range(num_classes):
        mask = truth == i
        n = int(mask.sum())
        if n == 0:
            continue
        out[i] = 100.0 * np.bincount(pred[mask], minlength=num_classes)[:num_classes] / n
    return out


def precision_recall(pred: np.ndarray, truth: np.ndarray, cls: int):
    """(precision, recall) of one class.

    No predictions of the class yields precision 0 with a warning; a class
    absent from the truth makes recall undefined and raises.
    """
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    tp = int(((pred == cls) & (truth == cls)).sum())
    fp = int(((pred == cls) & (truth != cls)).sum())
    fn = int(((pred != cls) & (truth == cls)).sum())
    if tp + fn == 0:
        raise ContractError(f"recall undefined: class {cls} absent from the ground truth")
    if tp + fp == 0:
        warnings.warn(f"no predictions of class {cls}; reporting precision 0")
        precision = 0.0
    else:
        precision = tp / (tp + fp)
    return precision, tp / (tp + fn)


def accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or len(pred) == 0:
        raise ContractError("accuracy needs aligned, non-empty predictions and truths")
    return float((pred == truth).mean())


@dataclass
class MetricsReport:
    """Per-task metrics: CSD is 3-class, VAD/OSD are binary reductions.

    Lists are per class (CSD) or [negative, positive] (binary tasks); None
    marks an undefined entry (class absent, or AP of the negative side).
    `map_score` for the binary tasks is the positive-class AP; for CSD it
    is the macro mean of one-vs-rest APs (an extension beyond the binary
    reductions, flagged by `map_is_extension`).
    """

    task: str
    accuracy: float
    precision: list
    recall: list
    average_precision: list
    map_score: float | None
    confusion: np.ndarray
    class_names: tuple
    map_is_extension: bool = False

    def to_dict(self) -> dict:
        def _clean(x):
            if x is None:
                return None
            x = float(x)
            return None if np.isnan(x) else x

        return {
            "task": self.task,
            "accuracy": _clean(self.accuracy),
            "precision": [_clean(v) for v in self.precision],
            "recall": [_clean(v) for v in self.recall],
            "average_precision": [_clean(v) for v in self.average_precision],
            "map": _clean(self.map_score),
            "map_is_extension": self.map_is_extension,
            "confusion_percent": [[_clean(v) for v in row] for row in self.confusion],
            "classes": list(self.class_names),
        }


def build_report(task: str, probs: np.ndarray, truth: np.ndarray,
                 preds: np.ndarray | None = None) -> MetricsReport:
    """Assemble the evaluation report for one task.

    `preds` are the hard 3-class decisions (post-policy); they default to
    the plain argmax. AP always uses the scores, not the hard decisions.
    """
    if task not in TASKS:
        raise ContractError(f"unknown task {task!r}; expected one of {TASKS}")
    probs = np.asarray(probs, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    if preds is None:
        preds = probs.argmax(axis=1).astype(np.int64)
    preds = np.asarray(preds, dtype=np.int64)

    if task == "csd":
        precision, recall, aps = [], [], []
        for c in range(NUM_CLASSES):
            try:
                p, r = precision_recall(preds, truth, c)
            except ContractError:
                p = r = None
            precision.append(p)
            recall.append(r)
            try:
                aps.append(average_precision(probs[:, c], (truth == c).astype(np.int64)))
            except ContractError:
                aps.append(None)
        defined = [a for a in aps if a is not None]
        return MetricsReport(
            task="csd",
            accuracy=accuracy(preds, truth),
            precision=precision,
            recall=recall,
            average_precision=aps,
            map_score=float(np.mean(defined)) if defined else None,
            confusion=confusion_matrix(preds, truth),
            class_names=CLASS_NAMES,
            map_is_extension=True,
        )

    scores, bin_truth = reduce_to_task(probs, truth, task)
    bin_preds = reduce_predictions(preds, task)
    precision, recall = [], []
    for c in (0, 1):
        try:
            p, r = precision_recall(bin_preds, bin_truth, c)
        except ContractError:
            p = r = None
        precision.append(p)
        recall.append(r)
    try:
        ap_pos = average_precision(scores, bin_truth)
    except ContractError:
        ap_pos = None
    names = ("no_speech", "speech") if task == "vad" else ("no_overlap", "overlap")
    return MetricsReport(
        task=task,
        accuracy=accuracy(bin_preds, bin_truth),
        precision=precision,
        recall=recall,
        average_precision=[None, ap_pos],
        map_score=ap_pos,
        confusion=confusion_matrix(bin_preds, bin_truth, num_classes=2),
        class_names=names,
    )


def format_report_text(report: MetricsReport) -> str:
    """Aligned text table in the ground-truth-row confusion layout."""
    lines = [f"Task: {report.task.upper()}"]
    lines.append("Confusion matrix [% of ground-truth rows]")
    width = max(9, max(len(n) for n in report.class_names) + 2)
    header = "T\\P".ljust(width) + "".join(n.rjust(width) for n in report.class_names)
    lines.append(header)
    for i, name in enumerate(report.class_names):
        cells = []
        for v in report.confusion[i]:
            cells.append(("n/a" if np.isnan(v) else f"{v:.1f}").rjust(width))
        lines.append(name.ljust(width) + "".join(cells))
    lines.append("")
    lines.append("Class".ljust(width) + "Precision".rjust(11) + "Recall".rjust(11)
                 + "AP".rjust(11))

    def _fmt(v):
        return "n/a" if v is None else f"{100.0 * v:.1f}"

    for i, name in enumerate(report.class_names):
        lines.append(
            name.ljust(width)
            + _fmt(report.precision[i]).rjust(11)
            + _fmt(report.recall[i]).rjust(11)
            + _fmt(report.average_precision[i]).rjust(11)
        )
    map_note = " (macro one-vs-rest extension)" if report.map_is_extension else ""
    lines.append("")
    lines.append(f"Accuracy: {_fmt(report.accuracy)}%")
    lines.append(f"mAP: {_fmt(report.map_score)}%{map_note}")
    return "\n".join(lines) + "\n"


def format_report_csv(report: MetricsReport) -> str:
    """Per-class metric rows as comma-delimited text."""
    def _fmt(v):
        return "" if v is None else f"{float(v):.6f}"

    lines = ["class,precision,recall,average_precision"]
    for i, name in enumerate(report.class_names):
        lines.append(f"{name},{_fmt(report.precision[i])},{_fmt(report.recall[i])},"
                     f"{_fmt(report.average_precision[i])}")
    lines.append(f"__accuracy__,{_fmt(report.accuracy)},,")
    lines.append(f"__map__,{_fmt(report.map_score)},,")
    return "\n".join(lines) + "\n"
