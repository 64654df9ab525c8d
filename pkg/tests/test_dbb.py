"""Batch-balanced loss against hand values and the transliterated oracle."""

from __future__ import annotations

import csv

import numpy as np
import pytest

from gesturelab.dbb import (
    BatchClassStats,
    batch_loss,
    class_weights,
    loss_factor,
    positive_mask,
    write_batch_log,
)
from gesturelab.errors import ShapeError, ValidationError
from oracles import (
    finite_difference_gradient,
    max_relative_error,
    oracle_class_weights,
    oracle_dbb_batch_loss,
    oracle_plain_batch_loss,
)


def random_batch(rng, batch_size=None, n_classes=None):
    b = batch_size or int(rng.integers(1, 9))
    c = n_classes or int(rng.integers(1, 5))
    pred = rng.random((b, c))
    # mix of zero, binary, and smoothed-looking targets
    target = np.where(rng.random((b, c)) < 0.4, 0.0, rng.random((b, c)))
    return pred, target


class TestPositiveMask:
    def test_any_presence_is_positive_at_default_threshold(self):
        mask = positive_mask(np.array([[16 / 136, 0.0]]))
        assert mask.tolist() == [[True, False]]

    def test_binary_targets_reproduce_labels(self):
        targets = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert np.array_equal(positive_mask(targets), targets.astype(bool))

    def test_threshold_is_strict(self):
        assert positive_mask(np.array([[0.5]]), threshold=0.5).tolist() == [[False]]

    def test_out_of_range_targets_rejected(self):
        with pytest.raises(ValidationError):
            positive_mask(np.array([[1.5]]))


class TestLossFactor:
    def stats(self, pos, neg):
        return BatchClassStats(pos + neg, np.array([pos]), np.array([neg]))

    def test_no_positives(self):
        assert loss_factor(self.stats(0, 32), 0) == 0.0

    def test_positive_majority(self):
        assert loss_factor(self.stats(20, 12), 0) == 1.0

    def test_minority_scales_by_batch_over_positives(self):
        assert loss_factor(self.stats(4, 28), 0) == 8.0

    def test_factor_range_invariant(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            b = int(rng.integers(1, 33))
            pos = int(rng.integers(0, b + 1))
            f = loss_factor(self.stats(pos, b - pos), 0)
            assert f == 0.0 or 1.0 <= f <= b
            if pos:
                assert pos <= f * pos <= b


class TestBatchLoss:
    def test_hand_case_one_positive_one_negative(self):
        pred = np.array([[0.5], [0.5]])
        target = np.array([[1.0], [0.0]])
        loss, grad, details = batch_loss(pred, target)
        assert loss == pytest.approx(0.5)
        assert details[0].factor == 1.0
        assert np.allclose(grad, [[-1.0], [1.0]])

    def test_all_classes_absent(self):
        pred = np.random.default_rng(0).random((4, 3))
        loss, grad, details = batch_loss(pred, np.zeros((4, 3)))
        assert loss == 0.0
        assert np.all(grad == 0)
        assert all(d.factor == 0.0 for d in details)

    def test_perfect_predictions(self):
        target = np.array([[1.0, 0.0], [0.0, 1.0]])
        loss, grad, _ = batch_loss(target.copy(), target)
        assert loss == 0.0
        assert np.all(grad == 0)

    def test_matches_transliterated_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            pred, target = random_batch(rng)
            loss, _, _ = batch_loss(pred, target)
            expected = oracle_dbb_batch_loss(pred.tolist(), target.tolist())
            assert loss == pytest.approx(expected, abs=1e-12)

    def test_factor_positive_only_matches_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            pred, target = random_batch(rng)
            loss, _, _ = batch_loss(pred, target, factor_positive_only=True)
            expected = oracle_dbb_batch_loss(
                pred.tolist(), target.tolist(), factor_positive_only=True
            )
            assert loss == pytest.approx(expected, abs=1e-12)

    def test_weighted_matches_oracle(self):
        rng = np.random.default_rng(19)
        for _ in range(30):
            pred, target = random_batch(rng)
            w = rng.random(pred.shape[1]) * 3
            loss, _, _ = batch_loss(pred, target, weights=w)
            expected = oracle_dbb_batch_loss(pred.tolist(), target.tolist(), weights=w)
            assert loss == pytest.approx(expected, abs=1e-12)

    def test_permutation_invariant_over_examples(self):
        rng = np.random.default_rng(3)
        pred, target = random_batch(rng, batch_size=8, n_classes=3)
        baseline, _, _ = batch_loss(pred, target)
        for _ in range(5):
            order = rng.permutation(8)
            shuffled, _, _ = batch_loss(pred[order], target[order])
            assert shuffled == pytest.approx(baseline, abs=1e-12)

    def test_disabled_equals_plain_per_class_mse(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            pred, target = random_batch(rng)
            loss, grad, _ = batch_loss(pred, target, dynamic=False)
            expected = oracle_plain_batch_loss(pred.tolist(), target.tolist())
            assert loss == pytest.approx(expected, abs=1e-12)
            assert np.allclose(grad, 2 * (pred - target) / pred.shape[0])

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(23)
        for dynamic in (True, False):
            for positive_only in (False, True):
                pred, target = random_batch(rng, batch_size=6, n_classes=3)
                _, grad, _ = batch_loss(
                    pred, target, dynamic=dynamic, factor_positive_only=positive_only
                )
                numeric = finite_difference_gradient(
                    lambda: batch_loss(
                        pred, target, dynamic=dynamic,
                        factor_positive_only=positive_only,
                    )[0],
                    pred,
                )
                assert max_relative_error(grad, numeric) < 1e-6

    def test_zero_weight_class_contributes_nothing(self):
        pred = np.array([[0.9, 0.9], [0.1, 0.1]])
        target = np.array([[1.0, 1.0], [0.0, 0.0]])
        loss, grad, _ = batch_loss(pred, target, weights=np.array([1.0, 0.0]))
        only_first, _, _ = batch_loss(pred[:, :1], target[:, :1])
        assert loss == pytest.approx(only_first)
        assert np.all(grad[:, 1] == 0)

    def test_non_finite_predictions_abort_with_class_list(self):
        pred = np.array([[0.5, np.nan]])
        with pytest.raises(ValidationError, match=r"\[1\]"):
            batch_loss(pred, np.array([[1.0, 1.0]]))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            batch_loss(np.ones((2, 3)), np.ones((3, 2)))


class TestClassWeights:
    def test_inverse_frequency_arithmetic(self):
        targets = np.zeros((100, 3))
        targets[:10, 0] = 1.0
        targets[:30, 1] = 1.0
        targets[:60, 2] = 1.0
        w = class_weights(targets)
        assert np.allclose(w, [10.0, 10 / 3, 5 / 3])
        assert np.allclose(w, oracle_class_weights(targets.tolist()))

    def test_single_class(self):
        targets = np.ones((5, 1))
        assert class_weights(targets).tolist() == [1.0]

    def test_two_equal_classes(self):
        targets = np.ones((5, 2))
        assert class_weights(targets).tolist() == [2.0, 2.0]

    def test_zero_positive_class_gets_zero(self):
        targets = np.zeros((10, 2))
        targets[:4, 0] = 1.0
        assert class_weights(targets).tolist() == [1.0, 0.0]

    def test_no_positives_anywhere_rejected(self):
        with pytest.raises(ValidationError):
            class_weights(np.zeros((5, 2)))

    def test_smoothed_targets_count_any_presence(self):
        targets = np.array([[16 / 136, 0.0], [1.0, 0.0]])
        assert class_weights(targets).tolist() == [1.0, 0.0]


class TestBatchLog:
    def test_csv_layout(self, tmp_path):
        pred = np.array([[0.5], [0.5]])
        target = np.array([[1.0], [0.0]])
        _, _, details = batch_loss(pred, target)
        path = tmp_path / "dbb.csv"
        write_batch_log(path, [(0, details)], class_names=["Nodding"])
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["step", "class", "pos", "neg", "factor", "weight", "loss"]
        assert rows[1][:4] == ["0", "Nodding", "1", "1"]
