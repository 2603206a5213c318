import math

import numpy as np
import pytest

from csdkit.errors import ConfigError, ContractError
from csdkit.losses import (
    LossConfig,
    ce_ls_weighted,
    cost_matrix_from_confusion,
    cs_loss,
    total_objective,
    with_cost_matrix,
)
from csdkit.tensor import Tensor

from gradcheck import check_gradients


def _plain_ce(logits: np.ndarray, labels: np.ndarray) -> float:
    """Independent scalar cross-entropy oracle."""
    total = 0.0
    for row, y in zip(logits, labels):
        denominator = math.fsum(math.exp(v - max(row)) for v in row)
        total += -(row[y] - max(row) - math.log(denominator))
    return total / len(labels)


class TestCeLsWeighted:
    def test_perfect_prediction_drives_loss_to_zero(self):
        logits = Tensor(np.array([[30.0, 0.0, 0.0], [0.0, 30.0, 0.0]]))
        cfg = LossConfig(label_smoothing=0.0)
        loss = ce_ls_weighted(logits, np.array([0, 1]), cfg)
        assert loss.item() < 1e-12

    def test_uniform_logits_give_ln3(self):
        logits = Tensor(np.zeros((4, 3)))
        cfg = LossConfig(label_smoothing=0.0)
        loss = ce_ls_weighted(logits, np.array([0, 1, 2, 0]), cfg)
        assert loss.item() == pytest.approx(math.log(3.0), rel=1e-12)

    def test_scalar_oracle_with_smoothing_and_weights(self):
        # independent evaluation of -w[y] * sum_c q_c log p_c
        logits_row = np.array([2.0, 1.0, 0.0])
        eps, weights, y = 0.1, np.array([1.5, 1.0, 1.0]), 0
        denominator = math.fsum(math.exp(v) for v in logits_row)
        logp = [v - math.log(denominator) for v in logits_row]
        q = [eps / 3] * 3
        q[y] += 1.0 - eps
        expected = -weights[y] * math.fsum(qc * lp for qc, lp in zip(q, logp))
        cfg = LossConfig(label_smoothing=eps, class_weights=weights)
        loss = ce_ls_weighted(Tensor(logits_row[None]), np.array([y]), cfg)
        assert loss.item() == pytest.approx(expected, rel=1e-12)

    def test_reduces_to_plain_ce(self, rng):
        # eps = 0 and unit weights must match vanilla cross-entropy to 1e-12
        logits = rng.normal(size=(8, 3))
        labels = rng.integers(0, 3, size=8)
        cfg = LossConfig(label_smoothing=0.0, class_weights=np.ones(3))
        ours = ce_ls_weighted(Tensor(logits), labels, cfg).item()
        assert abs(ours - _plain_ce(logits, labels)) <= 1e-12

    def test_invalid_label_rejected(self):
        with pytest.raises(ContractError):
            ce_ls_weighted(Tensor(np.zeros((1, 3))), np.array([3]), LossConfig())

    def test_batch_order_invariance(self, rng):
        logits = rng.normal(size=(6, 3))
        labels = rng.integers(0, 3, size=6)
        cfg = LossConfig(class_weights=np.array([1.4, 0.6, 1.0]))
        perm = rng.permutation(6)
        a = ce_ls_weighted(Tensor(logits), labels, cfg).item()
        b = ce_ls_weighted(Tensor(logits[perm]), labels[perm], cfg).item()
        assert a == pytest.approx(b, rel=1e-12)


class TestCsLoss:
    def test_zero_cost_matrix(self, rng):
        logits = Tensor(rng.normal(size=(5, 3)))
        labels = rng.integers(0, 3, size=5)
        assert cs_loss(logits, labels, np.zeros((3, 3))).item() == 0.0

    def test_onehot_prediction_costs_nothing(self):
        logits = Tensor(np.array([[40.0, 0.0, 0.0]]))
        c = np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0]], dtype=float)
        assert cs_loss(logits, np.array([0]), c).item() < 1e-12

    def test_hand_computed_expected_cost(self):
        # softmax(log p) = p exactly, so the expected cost is
        # 0.2 * 1 + 0.3 * 4 = 1.4
        probs = np.array([0.2, 0.5, 0.3])
        c = np.zeros((3, 3))
        c[1] = [1.0, 0.0, 4.0]
        loss = cs_loss(Tensor(np.log(probs)[None]), np.array([1]), c)
        assert abs(loss.item() - 1.4) <= 1e-12

    def test_negative_cost_entry_rejected(self):
        c = np.zeros((3, 3))
        c[0, 1] = -0.5
        with pytest.raises(ConfigError):
            cs_loss(Tensor(np.zeros((1, 3))), np.array([0]), c)

    def test_nonzero_diagonal_rejected(self):
        c = np.eye(3)
        with pytest.raises(ConfigError):
            cs_loss(Tensor(np.zeros((1, 3))), np.array([0]), c)

    def test_nonnegative_always(self, rng):
        for _ in range(20):
            logits = Tensor(rng.normal(size=(4, 3)))
            labels = rng.integers(0, 3, size=4)
            c = np.abs(rng.normal(size=(3, 3)))
            np.fill_diagonal(c, 0.0)
            assert cs_loss(logits, labels, c).item() >= 0.0


class TestTotalObjective:
    def test_disabled_cs_equals_ce_exactly(self, rng):
        logits_data = rng.normal(size=(6, 3))
        labels = rng.integers(0, 3, size=6)
        cfg = LossConfig(cs_enabled=False)
        a = total_objective(Tensor(logits_data), labels, cfg).item()
        b = ce_ls_weighted(Tensor(logits_data), labels, cfg).item()
        assert a == b

    def test_zero_lambda_equals_ce_exactly(self, rng):
        logits_data = rng.normal(size=(6, 3))
        labels = rng.integers(0, 3, size=6)
        c = np.abs(rng.normal(size=(3, 3)))
        np.fill_diagonal(c, 0.0)
        cfg = LossConfig(cost_weight=0.0, cost_matrix=c, cs_enabled=True)
        a = total_objective(Tensor(logits_data), labels, cfg).item()
        b = ce_ls_weighted(Tensor(logits_data), labels, cfg).item()
        assert a == b

    def test_zero_cost_matrix_equals_ce_exactly(self, rng):
        logits_data = rng.normal(size=(6, 3))
        labels = rng.integers(0, 3, size=6)
        cfg = LossConfig(cost_weight=17.0, cs_enabled=True)
        a = total_objective(Tensor(logits_data), labels, cfg).item()
        b = ce_ls_weighted(Tensor(logits_data), labels, cfg).item()
        assert a == b

    def test_gradient_matches_finite_differences(self, rng):
        logits = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        labels = rng.integers(0, 3, size=5)
        c = np.abs(rng.normal(size=(3, 3)))
        np.fill_diagonal(c, 0.0)
        cfg = LossConfig(
            label_smoothing=0.07,
            class_weights=np.array([1.2, 0.7, 1.1]),
            cost_matrix=c,
            cost_weight=16.0,
            cs_enabled=True,
        )
        check_gradients(lambda: total_objective(logits, labels, cfg), [logits], rng,
                        samples_per_tensor=15)


class TestCostMatrixFromConfusion:
    def test_identity_confusion_gives_zero_matrix(self):
        with pytest.warns(UserWarning, match="no-op"):
            c = cost_matrix_from_confusion(100.0 * np.eye(3))
        np.testing.assert_array_equal(c, np.zeros((3, 3)))

    def test_meeting_like_row_normalization(self):
        # single-channel meeting confusion; its worst error (37% of true-2
        # predicted as 1) becomes cost 1 and the same row's 1% becomes 0.027
        confusion = np.array([
            [78.0, 20.0, 2.0],
            [9.0, 75.0, 16.0],
            [1.0, 37.0, 62.0],
        ])
        c = cost_matrix_from_confusion(confusion)
        assert c[2, 1] == pytest.approx(1.0)
        assert c[2, 0] == pytest.approx(0.01 / 0.37)
        assert c[2, 0] == pytest.approx(0.027, abs=5e-4)
        np.testing.assert_array_equal(np.diag(c), np.zeros(3))
        assert c.max() == 1.0

    def test_symmetric_confusion_gives_symmetric_cost(self):
        confusion = np.array([
            [90.0, 8.0, 2.0],
            [8.0, 72.0, 20.0],
            [2.0, 20.0, 78.0],
        ])
        c = cost_matrix_from_confusion(confusion)
        np.testing.assert_allclose(c, c.T, atol=1e-15)

    def test_nan_rows_are_treated_as_costless(self):
        confusion = np.array([
            [90.0, 8.0, 2.0],
            [np.nan, np.nan, np.nan],
            [2.0, 20.0, 78.0],
        ])
        c = cost_matrix_from_confusion(confusion)
        np.testing.assert_array_equal(c[1], np.zeros(3))
        assert c.max() == 1.0

    def test_bad_row_sum_rejected(self):
        with pytest.raises(ContractError):
            cost_matrix_from_confusion(np.full((3, 3), 10.0))

    def test_with_cost_matrix_arms_stage_two(self):
        cfg = LossConfig()
        c = np.zeros((3, 3))
        c[0, 1] = 1.0
        staged = with_cost_matrix(cfg, c)
        assert staged.cs_enabled
        np.testing.assert_array_equal(staged.cost_matrix, c)
        assert not cfg.cs_enabled
