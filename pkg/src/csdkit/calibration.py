"""Temperature scaling and the low-confidence fallback policy.

A single scalar T > 0 divides the logits before the softmax; it is fitted
by minimizing validation NLL with a golden-section search over [0.05, 20]
(the NLL is unimodal in T for this family). Scaling never changes a
sample's argmax, so accuracy is untouched; only confidence moves. The
policy maps any prediction whose top probability falls below a threshold
to class 2, the conservative choice for downstream beamformer control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

T_BOUNDS = (0.05, 20.0)
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class CalibrationResult:
    temperature: float
    nll_before: float
    nll_after: float
    confidence_threshold: float = 0.0

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "nll_before": self.nll_before,
            "nll_after": self.nll_after,
            "confidence_threshold": self.confidence_threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationResult":
        return cls(**d)


def softmax_probs(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Row-wise softmax of logits / T."""
    z = np.asarray(logits, dtype=np.float64) / float(temperature)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def nll(logits: np.ndarray, labels: np.ndarray, temperature: float = 1.0) -> float:
    """Mean negative log-likelihood of the true classes at temperature T."""
    logits = np.asarray(logits, dtype=np.float64) / float(temperature)
    labels = np.asarray(labels, dtype=np.int64)
    z = logits - logits.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1))
    return float(np.mean(lse - z[np.arange(len(labels)), labels]))


def fit_temperature(logits: np.ndarray, labels: np.ndarray,
                    confidence_threshold: float = 0.0,
                    tol: float = 1e-4) -> CalibrationResult:
    """Fit T by golden-section search; never worse than the uncalibrated T=1."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or len(logits) < 1 or len(logits) != len(labels):
        raise ContractError("fit_temperature needs aligned (M, C) logits and M labels")

    def objective(t: float) -> float:
        return nll(logits, labels, t)

    a, b = T_BOUNDS
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = objective(c), objective(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = objective(d)
    t_star = (a + b) / 2.0

    before = objective(1.0)
    after = objective(t_star)
    if after > before:  # keep the contract exact even at the search tolerance
        t_star, after = 1.0, before
    return CalibrationResult(
        temperature=float(t_star),
        nll_before=before,
        nll_after=after,
        confidence_threshold=float(confidence_threshold),
    )


def apply_policy(probs: np.ndarray, threshold: float = 0.0) -> int:
    """argmax class, demoted to class 2 when its probability is below threshold."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (3,) or (probs < 0).any() or abs(probs.sum() - 1.0) > 1e-6:
        raise ContractError(f"policy needs a 3-class probability vector, got {probs!r}")
    c = int(probs.argmax())
    return 2 if probs[c] < threshold else c


def apply_policy_batch(probs: np.ndarray, threshold: float = 0.0) -> np.ndarray:
    """Vectorized apply_policy over (M, 3) probabilities."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] != 3:
        raise ContractError(f"expected (M, 3) probabilities, got {probs.shape}")
    preds = probs.argmax(axis=1)
    top = probs[np.arange(len(probs)), preds]
    return np.where(top < threshold, 2, preds).astype(np.int64)
