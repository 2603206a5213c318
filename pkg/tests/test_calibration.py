import numpy as np
import pytest

from csdkit.calibration import (
    T_BOUNDS,
    apply_policy,
    apply_policy_batch,
    fit_temperature,
    nll,
    softmax_probs,
)
from csdkit.errors import ContractError


def _consistent_dataset():
    """Rows whose label counts exactly match their softmax probabilities.

    softmax(log p) = p, and the empirical conditional equals p, so the NLL
    over this dataset is minimized at exactly T = 1.
    """
    blocks = [
        (np.array([0.2, 0.3, 0.5]), 10),
        (np.array([0.6, 0.3, 0.1]), 10),
        (np.array([0.1, 0.8, 0.1]), 10),
    ]
    logits, labels = [], []
    for p, n in blocks:
        counts = (p * n).round().astype(int)
        for cls, k in enumerate(counts):
            for _ in range(k):
                logits.append(np.log(p))
                labels.append(cls)
    return np.asarray(logits), np.asarray(labels)


class TestFitTemperature:
    def test_consistent_logits_fit_t_near_one(self):
        logits, labels = _consistent_dataset()
        result = fit_temperature(logits, labels)
        assert result.temperature == pytest.approx(1.0, abs=1e-3)

    def test_scaled_logits_recover_the_factor(self):
        logits, labels = _consistent_dataset()
        t1 = fit_temperature(logits, labels).temperature
        t2 = fit_temperature(2.0 * logits, labels).temperature
        assert t2 == pytest.approx(2.0 * t1, abs=0.01)
        assert t2 == pytest.approx(2.0, abs=0.05)

    def test_never_increases_nll(self, rng):
        for _ in range(25):
            m = int(rng.integers(1, 40))
            logits = rng.normal(scale=3.0, size=(m, 3))
            labels = rng.integers(0, 3, size=m)
            result = fit_temperature(logits, labels)
            assert result.nll_after <= result.nll_before + 1e-9
            assert result.nll_after == pytest.approx(
                nll(logits, labels, result.temperature), abs=1e-12
            )

    def test_single_confident_sample_pushes_t_to_lower_bound(self):
        # logits mild enough that the NLL stays strictly decreasing toward
        # T=0 in float64 instead of underflowing to a flat zero plateau
        logits = np.array([[1.5, 0.0, 0.0]])
        labels = np.array([0])
        result = fit_temperature(logits, labels)
        assert result.temperature == pytest.approx(T_BOUNDS[0], abs=1e-2)

    def test_argmax_invariant_under_fitted_temperature(self, rng):
        logits = rng.normal(scale=2.0, size=(50, 3))
        labels = rng.integers(0, 3, size=50)
        result = fit_temperature(logits, labels)
        before = softmax_probs(logits).argmax(axis=1)
        after = softmax_probs(logits, result.temperature).argmax(axis=1)
        np.testing.assert_array_equal(before, after)

    def test_refit_after_scaling_is_idempotent(self):
        # miscalibrated-by-3 logits have an interior optimum at T = 3;
        # dividing by the fitted T and refitting must land back at ~1
        logits, labels = _consistent_dataset()
        first = fit_temperature(3.0 * logits, labels)
        assert first.temperature == pytest.approx(3.0, abs=0.01)
        second = fit_temperature(3.0 * logits / first.temperature, labels)
        assert second.temperature == pytest.approx(1.0, abs=5e-3)

    def test_empty_input_rejected(self):
        with pytest.raises(ContractError):
            fit_temperature(np.zeros((0, 3)), np.zeros(0, dtype=int))


class TestApplyPolicy:
    def test_zero_threshold_is_argmax(self):
        assert apply_policy(np.array([0.2, 0.5, 0.3]), 0.0) == 1

    def test_low_confidence_falls_back_to_class_two(self):
        assert apply_policy(np.array([0.4, 0.35, 0.25]), 0.5) == 2

    def test_confident_class_two_stays(self):
        assert apply_policy(np.array([0.1, 0.1, 0.8]), 0.5) == 2

    def test_invalid_simplex_rejected(self):
        with pytest.raises(ContractError):
            apply_policy(np.array([0.9, 0.4, 0.2]), 0.0)

    def test_batch_matches_scalar(self, rng):
        probs = softmax_probs(rng.normal(size=(30, 3)))
        batch = apply_policy_batch(probs, 0.45)
        scalar = [apply_policy(p, 0.45) for p in probs]
        np.testing.assert_array_equal(batch, scalar)
