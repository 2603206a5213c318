"""Training objectives: weighted, label-smoothed cross-entropy plus an
optional cost-sensitive penalty.

The cost-sensitive term is the expected misclassification cost under a
3x3 nonnegative cost matrix with zero diagonal; the total objective is
ce + cost_weight * cs when enabled (cost_weight is typically set in the
15-20 range). The cost matrix itself is derived from a first-stage
confusion matrix so that the retraining stage penalizes the errors the
first stage actually made, proportionally to how often it made them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as tn
from .errors import ConfigError, ContractError
from .tensor import Tensor

NUM_CLASSES = 3


def _default_weights() -> np.ndarray:
    return np.ones(NUM_CLASSES)


def _default_cost_matrix() -> np.ndarray:
    return np.zeros((NUM_CLASSES, NUM_CLASSES))


@dataclass
class LossConfig:
    label_smoothing: float = 0.1
    class_weights: np.ndarray = field(default_factory=_default_weights)
    cost_matrix: np.ndarray = field(default_factory=_default_cost_matrix)
    cost_weight: float = 15.0
    cs_enabled: bool = False

    def __post_init__(self):
        self.class_weights = np.asarray(self.class_weights, dtype=np.float64)
        self.cost_matrix = np.asarray(self.cost_matrix, dtype=np.float64)
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError(f"label_smoothing must be in [0, 1), got {self.label_smoothing}")
        if self.cost_weight < 0:
            raise ConfigError(f"cost_weight must be >= 0, got {self.cost_weight}")
        if self.class_weights.shape != (NUM_CLASSES,) or (self.class_weights <= 0).any():
            raise ConfigError("class_weights must be 3 strictly positive values")
        _validate_cost_matrix(self.cost_matrix)

    def to_dict(self) -> dict:
        return {
            "label_smoothing": self.label_smoothing,
            "class_weights": self.class_weights.tolist(),
            "cost_matrix": self.cost_matrix.tolist(),
            "cost_weight": self.cost_weight,
            "cs_enabled": self.cs_enabled,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        return cls(**d)


def _validate_cost_matrix(c: np.ndarray) -> None:
    if c.shape != (NUM_CLASSES, NUM_CLASSES):
        raise ConfigError(f"cost matrix must be 3x3, got {c.shape}")
    if (c < 0).any():
        raise ConfigError("cost matrix entries must be nonnegative")
    if np.diag(c).any():
        raise ConfigError("cost matrix diagonal must be zero")


def _validate_labels(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or not np.isin(labels, range(NUM_CLASSES)).all():
        raise ContractError("labels must be a 1-D array of classes in {0, 1, 2}")
    return labels.astype(np.int64)


def ce_ls_weighted(logits: Tensor, labels: np.ndarray, cfg: LossConfig) -> Tensor:
    """Class-weighted cross-entropy against label-smoothed targets.

    Per sample: target q = (1 - eps) * onehot(y) + eps / 3 and loss
    -w[y] * sum_c q_c log softmax(logits)_c; the batch reduces by a plain
    mean (weights scale samples, they do not renormalize the batch).
    """
    labels = _validate_labels(labels)
    batch = labels.shape[0]
    if logits.shape != (batch, NUM_CLASSES):
        raise ContractError(f"logits must be ({batch}, {NUM_CLASSES}), got {logits.shape}")
    eps = cfg.label_smoothing
    q = np.full((batch, NUM_CLASSES), eps / NUM_CLASSES)
    q[np.arange(batch), labels] += 1.0 - eps
    w = cfg.class_weights[labels]
    logp = tn.log_softmax(logits, axis=-1)
    per_sample = tn.sum(tn.mul(Tensor(q), logp), axis=-1)
    return tn.scale(tn.sum(tn.mul(per_sample, Tensor(w))), -1.0 / batch)


def cs_loss(logits: Tensor, labels: np.ndarray, cost_matrix: np.ndarray) -> Tensor:
    """Expected misclassification cost: mean over samples of p . C[y]."""
    cost_matrix = np.asarray(cost_matrix, dtype=np.float64)
    _validate_cost_matrix(cost_matrix)
    labels = _validate_labels(labels)
    batch = labels.shape[0]
    if logits.shape != (batch, NUM_CLASSES):
        raise ContractError(f"logits must be ({batch}, {NUM_CLASSES}), got {logits.shape}")
    probs = tn.softmax(logits, axis=-1)
    rows = cost_matrix[labels]
    per_sample = tn.sum(tn.mul(probs, Tensor(rows)), axis=-1)
    return tn.scale(tn.sum(per_sample), 1.0 / batch)


def total_objective(logits: Tensor, labels: np.ndarray, cfg: LossConfig) -> Tensor:
    """ce_ls_weighted plus cost_weight * cs_loss when the CS stage is enabled."""
    ce = ce_ls_weighted(logits, labels, cfg)
    if not cfg.cs_enabled:
        return ce
    cs = cs_loss(logits, labels, cfg.cost_matrix)
    return tn.add(ce, tn.scale(cs, cfg.cost_weight))


def cost_matrix_from_confusion(confusion: np.ndarray) -> np.ndarray:
    """Stage-two cost matrix from a ground-truth-normalized confusion (%).

    Off-diagonal rates are taken as costs and the matrix is scaled so its
    largest entry is 1, preserving the relative frequency of every error
    (per-row scaling would equalize rows and lose that structure; the scale
    itself is carried by cost_weight). Absent-class rows (NaN) contribute
    zero cost. A perfectly diagonal confusion yields the zero matrix, which
    makes the CS stage a no-op; that case is warned about.
    """
    confusion = np.asarray(confusion, dtype=np.float64)
    if confusion.shape != (NUM_CLASSES, NUM_CLASSES):
        raise ContractError(f"confusion matrix must be 3x3, got {confusion.shape}")
    rows = confusion.copy()
    missing = ~np.isfinite(rows).all(axis=1)
    rows[missing] = 0.0
    sums = rows.sum(axis=1)
    if ((~missing) & (np.abs(sums - 100.0) > 1.0)).any():
        raise ContractError("confusion rows must sum to ~100 (ground-truth normalized %)")
    cost = rows / 100.0
    np.fill_diagonal(cost, 0.0)
    peak = cost.max()
    if peak == 0.0:
        warnings.warn("confusion has no off-diagonal mass; cost-sensitive stage is a no-op")
        return cost
    return cost / peak


def with_cost_matrix(cfg: LossConfig, cost_matrix: np.ndarray) -> LossConfig:
    """The same config with the CS stage armed and a new cost matrix."""
    return replace(cfg, cost_matrix=np.asarray(cost_matrix, dtype=np.float64),
                   cs_enabled=True)
