"""Mini-batch Adam training loop and batched inference helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .errors import ConfigError, NumericError
from .losses import LossConfig, total_objective
from .model import CsdModel
from .tensor import AdamState, GradTape


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-9
    batch_size: int = 16
    epochs: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigError("lr and weight_decay must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
        }


def _stack_features(features, indices) -> np.ndarray:
    return np.stack([np.asarray(features[i], dtype=np.float64) for i in indices])


def train(model: CsdModel, features, labels, train_cfg: TrainConfig,
          loss_cfg: LossConfig) -> list[dict]:
    """Train in place over seeded shuffled mini-batches; returns epoch logs.

    `features` is a sequence of (channels, 257, 32) arrays and `labels` the
    aligned classes. Each epoch log carries the mean loss and the running
    training accuracy (computed from each batch's pre-update logits), so two
    runs with the same seed produce identical logs. A non-finite loss aborts
    with the offending batch index.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(features) == 0 or len(features) != len(labels):
        raise ConfigError("training needs a non-empty, aligned feature/label set")
    params = model.parameters()
    state = AdamState.for_params(params, lr=train_cfg.lr,
                                 weight_decay=train_cfg.weight_decay)
    rng = np.random.default_rng(train_cfg.seed)
    history = []
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(len(labels))
        loss_total = 0.0
        correct = 0
        for batch_index, lo in enumerate(range(0, len(order), train_cfg.batch_size)):
            chunk = order[lo:lo + train_cfg.batch_size]
            xb = _stack_features(features, chunk)
            yb = labels[chunk]
            try:
                with GradTape() as tape:
                    logits = model.forward_batch(xb)
                    loss = total_objective(logits, yb, loss_cfg)
                grads = tn.backward(loss, tape)
                tn.adam_step(params, grads, state)
            except NumericError as e:
                raise NumericError(
                    f"non-finite loss at epoch {epoch + 1}, batch {batch_index}"
                ) from e
            loss_total += loss.item() * len(chunk)
            correct += int((logits.data.argmax(axis=1) == yb).sum())
        history.append({
            "epoch": epoch + 1,
            "loss": loss_total / len(order),
            "accuracy": correct / len(order),
        })
    return history


def predict_logits(model: CsdModel, features, batch_size: int = 64) -> np.ndarray:
    """Raw logits (M, num_classes) for a sequence of segments, no tape."""
    if len(features) == 0:
        return np.zeros((0, model.cfg.num_classes))
    rows = []
    for lo in range(0, len(features), batch_size):
        xb = _stack_features(features, range(lo, min(lo + batch_size, len(features))))
        rows.append(model.forward_batch(xb).data)
    return np.concatenate(rows, axis=0)
