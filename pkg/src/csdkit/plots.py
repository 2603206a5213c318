"""Report figures: confusion heatmap and PR curves, rendered to files.

Uses the Agg backend so rendering works headless; PNG metadata that would
vary between runs is stripped so reruns stay byte-identical.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import MetricsReport, pr_curve, reduce_to_task

_PNG_METADATA = {"Software": None}


def save_confusion_heatmap(report: MetricsReport, path) -> None:
    matrix = np.asarray(report.confusion, dtype=np.float64)
    n = matrix.shape[0]
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    shown = np.nan_to_num(matrix, nan=0.0)
    im = ax.imshow(shown, cmap="Blues", vmin=0.0, vmax=100.0)
    for i in range(n):
        for j in range(n):
            v = matrix[i, j]
            text = "n/a" if np.isnan(v) else f"{v:.0f}"
            color = "white" if (not np.isnan(v) and v > 55.0) else "black"
            ax.text(j, i, text, ha="center", va="center", color=color)
    ax.set_xticks(range(n), report.class_names)
    ax.set_yticks(range(n), report.class_names)
    ax.set_xlabel("Predicted")
    ax.set_ylabel("True")
    ax.set_title(f"{report.task.upper()} confusion [% of ground truth]")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_METADATA)
    plt.close(fig)


def save_pr_curves(task: str, probs: np.ndarray, truth: np.ndarray, path) -> None:
    """One PR curve per class for CSD, or the positive-class curve for a
    binary reduction task."""
    probs = np.asarray(probs, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    if task == "csd":
        curves = [(f"class {c}", probs[:, c], (truth == c).astype(np.int64))
                  for c in range(probs.shape[1])]
    else:
        scores, bin_truth = reduce_to_task(probs, truth, task)
        curves = [(f"{task.upper()} positive", scores, bin_truth)]
    for label, scores, labels in curves:
        if labels.sum() == 0:
            continue
        precision, recall, _ = pr_curve(scores, labels)
        ax.step(np.concatenate(([0.0], recall)), np.concatenate(([1.0], precision)),
                where="post", label=label)
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_xlim(0.0, 1.02)
    ax.set_ylim(0.0, 1.02)
    ax.set_title(f"{task.upper()} precision-recall")
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_METADATA)
    plt.close(fig)
