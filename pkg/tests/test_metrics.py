"""Evaluation metrics against hand-computed and oracle values."""

import csv
import json
import math

import numpy as np
import pytest
import torch

from mmcl.errors import ValidationError
from mmcl.losses import regression_loss
from mmcl.metrics import (
    REPORT_KEYS,
    acc2_f1,
    acc7,
    compute_report,
    mae,
    pearson_corr,
    round_half_away,
)

from oracles import pearson_oracle


class TestRounding:
    def test_half_away_from_zero(self):
        x = np.array([0.5, -0.5, 1.5, -1.5, 2.49, -2.49])
        np.testing.assert_array_equal(
            round_half_away(x), [1.0, -1.0, 2.0, -2.0, 2.0, -2.0]
        )


class TestAcc7:
    def test_exact_match(self):
        assert acc7([1.0, -2.0, 0.0], [1.0, -2.0, 0.0]) == 1.0

    def test_rounding(self):
        # 1.4 -> 1, -0.6 -> -1, 0.4 -> 0
        assert acc7([1.4, -0.6, 0.4], [1.0, -1.0, 0.0]) == 1.0

    def test_clamping(self):
        # Out-of-range predictions saturate at the extremes.
        assert acc7([5.0, -9.0], [3.0, -3.0]) == 1.0

    def test_partial(self):
        assert acc7([1.0, 1.0, 1.0, 0.0], [1.0, 2.0, 1.0, 0.0]) == 0.75

    def test_labels_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            acc7([0.0], [3.5])


class TestAcc2F1:
    def test_has0_counts_zero_label_as_positive(self):
        preds = [-0.5, 0.1, 1.0]
        labels = [-1.0, 0.0, 2.0]
        acc, f1 = acc2_f1(preds, labels, "has0")
        assert acc == 1.0
        assert f1 == 1.0

    def test_non0_drops_zero_labels(self):
        preds = [-0.5, 0.1, 1.0]
        labels = [-1.0, 0.0, 2.0]
        acc, f1 = acc2_f1(preds, labels, "non0")
        # Only the two non-zero labels remain; both classified correctly.
        assert acc == 1.0
        assert f1 == 1.0

    def test_conventions_can_disagree(self):
        preds = [0.0, -1.0]
        labels = [0.0, 1.0]
        acc_has0, _ = acc2_f1(preds, labels, "has0")
        acc_non0, _ = acc2_f1(preds, labels, "non0")
        assert acc_has0 == 0.5
        assert acc_non0 == 0.0

    def test_f1_hand_computed(self):
        # pred_pos = [T, T, F, F], label_pos = [T, F, T, F]
        # tp=1, fp=1, fn=1 -> f1 = 2/(2+1+1) = 0.5
        preds = [1.0, 1.0, -1.0, -1.0]
        labels = [1.0, -1.0, 1.0, -1.0]
        acc, f1 = acc2_f1(preds, labels, "non0")
        assert acc == 0.5
        assert f1 == 0.5

    def test_all_zero_labels_rejected_in_non0(self):
        with pytest.raises(ValidationError):
            acc2_f1([0.1, -0.1], [0.0, 0.0], "non0")

    def test_unknown_convention(self):
        with pytest.raises(ValidationError):
            acc2_f1([1.0], [1.0], "weird")


class TestMae:
    def test_hand_value(self):
        assert mae([1.0, -1.0], [0.0, 1.0]) == 1.5

    def test_matches_regression_loss(self):
        rng = np.random.default_rng(0)
        preds = rng.uniform(-3, 3, size=20)
        labels = rng.uniform(-3, 3, size=20)
        torch_val = regression_loss(
            torch.tensor(preds), torch.tensor(labels)
        ).item()
        assert abs(mae(preds, labels) - torch_val) < 1e-12


class TestPearson:
    def test_hand_fixture(self):
        assert abs(pearson_corr([1.0, 2.0, 3.0], [1.0, 3.0, 2.0]) - 0.5) < 1e-12

    def test_perfect_linear(self):
        assert abs(pearson_corr([1.0, 2.0, 3.0], [2.0, 4.0, 6.0]) - 1.0) < 1e-12

    def test_oracle_equivalence(self):
        rng = np.random.default_rng(3)
        preds = rng.standard_normal(15)
        labels = rng.standard_normal(15)
        expected = pearson_oracle(preds.tolist(), labels.tolist())
        assert abs(pearson_corr(preds, labels) - expected) < 1e-12

    def test_zero_variance_rejected(self):
        with pytest.raises(ValidationError):
            pearson_corr([1.0, 1.0, 1.0], [0.0, 1.0, 2.0])


class TestReport:
    def fixture(self):
        rng = np.random.default_rng(7)
        labels = rng.uniform(-3, 3, size=10)
        labels[3] = 0.0
        preds = labels + rng.normal(0, 0.8, size=10)
        preds = np.clip(preds, -3.5, 3.5)
        return preds, labels

    def test_keys_and_consistency(self):
        preds, labels = self.fixture()
        report = compute_report(preds, labels)
        d = report.as_dict()
        assert tuple(d.keys()) == REPORT_KEYS
        assert d["acc7"] == acc7(preds, labels)
        assert d["mae"] == mae(preds, labels)
        assert d["corr"] == pearson_corr(preds, labels)
        acc, f1 = acc2_f1(preds, labels, "non0")
        assert d["acc2_non0"] == acc and d["f1_non0"] == f1
        assert report.n_samples == 10
        assert report.n_samples_non0 == 9

    def test_json_round_trip(self, tmp_path):
        preds, labels = self.fixture()
        report = compute_report(preds, labels)
        path = tmp_path / "metrics.json"
        report.save_json(path)
        loaded = json.loads(path.read_text())
        assert loaded == report.as_dict()

    def test_csv_layout(self, tmp_path):
        preds, labels = self.fixture()
        report = compute_report(preds, labels)
        path = tmp_path / "metrics.csv"
        report.save_csv(path)
        rows = list(csv.reader(path.open()))
        assert rows[0] == list(REPORT_KEYS)
        values = [float(v) for v in rows[1]]
        assert values == list(report.as_dict().values())

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            compute_report([1.0, 2.0], [1.0])

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            compute_report([math.nan, 1.0], [0.0, 1.0])
