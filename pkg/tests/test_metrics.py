"""Per-class and aggregate scoring, plus the report writers."""

import numpy as np
import pytest

from gesturelab.errors import ShapeError, ValidationError
from gesturelab.metrics import (
    binarize,
    compute_report,
    confusion,
    macro_f1,
    prf1,
    write_comparison_csv,
    write_report_csv,
    write_report_text,
)


class TestBinarize:
    def test_threshold_inclusive(self):
        outputs = np.array([[0.49, 0.5, 0.51]])
        np.testing.assert_array_equal(binarize(outputs), [[False, True, True]])

    def test_custom_threshold(self):
        outputs = np.array([[0.2, 0.3]])
        np.testing.assert_array_equal(binarize(outputs, 0.3), [[False, True]])

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.5])
    def test_threshold_must_be_interior(self, bad):
        with pytest.raises(ValidationError):
            binarize(np.zeros((1, 1)), bad)


class TestConfusion:
    def test_hand_case(self):
        pred = np.array([[1, 1], [0, 1], [1, 0], [0, 0]], bool)
        truth = np.array([[1, 0], [0, 1], [0, 0], [1, 1]], bool)
        counts = confusion(pred, truth)
        np.testing.assert_array_equal(counts.tp, [1, 1])
        np.testing.assert_array_equal(counts.fp, [1, 1])
        np.testing.assert_array_equal(counts.fn, [1, 1])
        np.testing.assert_array_equal(counts.tn, [1, 1])

    def test_counts_partition_batch(self):
        rng = np.random.default_rng(5)
        pred = rng.random((40, 6)) > 0.5
        truth = rng.random((40, 6)) > 0.5
        counts = confusion(pred, truth)
        np.testing.assert_array_equal(counts.tp + counts.fp + counts.fn + counts.tn, 40)

    def test_matches_elementwise_enumeration(self):
        rng = np.random.default_rng(6)
        pred = rng.random((25, 4)) > 0.4
        truth = rng.random((25, 4)) > 0.6
        counts = confusion(pred, truth)
        for c in range(4):
            tp = sum(1 for b in range(25) if pred[b, c] and truth[b, c])
            fp = sum(1 for b in range(25) if pred[b, c] and not truth[b, c])
            fn = sum(1 for b in range(25) if not pred[b, c] and truth[b, c])
            assert (counts.tp[c], counts.fp[c], counts.fn[c]) == (tp, fp, fn)


class TestPRF1:
    def test_perfect(self):
        pred = np.eye(3, dtype=bool)
        p, r, f1 = prf1(confusion(pred, pred))
        np.testing.assert_array_equal(p, 1)
        np.testing.assert_array_equal(r, 1)
        np.testing.assert_array_equal(f1, 1)

    def test_zero_over_zero_is_zero(self):
        pred = np.zeros((4, 2), bool)
        truth = np.zeros((4, 2), bool)
        p, r, f1 = prf1(confusion(pred, truth))
        np.testing.assert_array_equal(p, 0)
        np.testing.assert_array_equal(r, 0)
        np.testing.assert_array_equal(f1, 0)

    def test_hand_values(self):
        # tp=2 fp=1 fn=2: precision 2/3, recall 1/2, f1 = 2*(1/3)/(7/6)
        pred = np.array([[1], [1], [1], [0], [0], [0]], bool)
        truth = np.array([[1], [1], [0], [1], [1], [0]], bool)
        p, r, f1 = prf1(confusion(pred, truth))
        assert p[0] == pytest.approx(2 / 3)
        assert r[0] == pytest.approx(1 / 2)
        assert f1[0] == pytest.approx(2 * (2 / 3) * (1 / 2) / (2 / 3 + 1 / 2))


class TestMacroF1:
    def test_plain_mean(self):
        value = macro_f1(np.array([0.5, 1.0]), np.array([3, 2]))
        assert value == pytest.approx(0.75)

    def test_zero_support_excluded_by_default(self):
        value = macro_f1(np.array([0.8, 0.0]), np.array([3, 0]))
        assert value == pytest.approx(0.8)

    def test_zero_support_included_on_request(self):
        value = macro_f1(np.array([0.8, 0.0]), np.array([3, 0]), include_zero_support=True)
        assert value == pytest.approx(0.4)

    def test_all_zero_support(self):
        assert macro_f1(np.zeros(3), np.zeros(3, int)) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            macro_f1(np.zeros(0), np.zeros(0, int))


class TestReport:
    def make(self, threshold=0.5, include_zero_support=False):
        outputs = np.array(
            [
                [0.9, 0.2, 0.1],
                [0.8, 0.7, 0.2],
                [0.1, 0.6, 0.3],
                [0.2, 0.1, 0.4],
            ]
        )
        truth = np.array(
            [
                [1, 0, 0],
                [1, 1, 0],
                [0, 1, 0],
                [0, 0, 0],
            ],
            bool,
        )
        return compute_report(
            outputs,
            truth,
            ("a", "b", "c"),
            threshold=threshold,
            split="test",
            tag="unit",
            include_zero_support=include_zero_support,
        )

    def test_perfect_columns(self):
        report = self.make()
        np.testing.assert_array_equal(report.precision[:2], 1)
        np.testing.assert_array_equal(report.recall[:2], 1)
        np.testing.assert_array_equal(report.f1[:2], 1)

    def test_zero_support_class_tracked(self):
        report = self.make()
        assert report.support[2] == 0
        assert report.excluded_classes == ("c",)
        assert report.macro_f1 == pytest.approx(1.0)

    def test_include_zero_support_changes_macro(self):
        report = self.make(include_zero_support=True)
        assert report.excluded_classes == ()
        assert report.macro_f1 == pytest.approx(2 / 3)

    def test_micro_pools_all_classes(self):
        report = self.make()
        # tp=4, fp=0, fn=0 over all cells at threshold 0.5
        assert report.micro_precision == pytest.approx(1.0)
        assert report.micro_recall == pytest.approx(1.0)
        assert report.micro_f1 == pytest.approx(1.0)

    def test_threshold_monotonicity(self):
        # raising the threshold can only shrink predicted positives
        rng = np.random.default_rng(11)
        outputs = rng.random((60, 5))
        truth = rng.random((60, 5)) > 0.5
        previous = None
        for threshold in (0.2, 0.4, 0.6, 0.8):
            pred = binarize(outputs, threshold)
            total = int(pred.sum())
            if previous is not None:
                assert total <= previous
            previous = total

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            compute_report(np.zeros((2, 3)), np.zeros((2, 2), bool), ("a", "b", "c"))

    def test_class_name_count_checked(self):
        with pytest.raises(ShapeError):
            compute_report(np.zeros((2, 3)), np.zeros((2, 3), bool), ("a", "b"))


class TestWriters:
    def test_csv_layout(self, tmp_path):
        report = TestReport().make()
        path = tmp_path / "report.csv"
        write_report_csv(report, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("class,")
        assert len([ln for ln in lines if ln.startswith(("a,", "b,", "c,"))]) == 3
        assert any(ln.startswith("macro_f1,") for ln in lines)
        assert any(ln.startswith("micro,") for ln in lines)

    def test_text_layout(self, tmp_path):
        report = TestReport().make()
        path = tmp_path / "report.txt"
        write_report_text(report, path)
        text = path.read_text()
        assert "macro_f1 = 1.000000" in text
        assert "class[a]" in text

    def test_comparison_columns(self, tmp_path):
        report = TestReport().make()
        path = tmp_path / "compare.csv"
        write_comparison_csv(report, report, path)
        header = path.read_text().splitlines()[0].split(",")
        assert header == [
            "class",
            "precision_train",
            "precision_test",
            "recall_train",
            "recall_test",
        ]

    def test_writers_deterministic(self, tmp_path):
        report = TestReport().make()
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_report_csv(report, a)
        write_report_csv(report, b)
        assert a.read_bytes() == b.read_bytes()
