"""Sentiment evaluation metrics: Acc7, binary Acc2/F1 in both
conventions, MAE and Pearson correlation.

"has0" binarizes at >= 0 on both predictions and labels; "non0" first
drops samples whose true label is exactly 0, then binarizes at > 0.
Acc7 rounds half-away-from-zero and clamps predictions to [-3, 3].
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

REPORT_KEYS = (
    "acc7",
    "acc2_has0",
    "acc2_non0",
    "f1_has0",
    "f1_non0",
    "mae",
    "corr",
)


@dataclass
class MetricsReport:
    acc7: float
    acc2_has0: float
    acc2_non0: float
    f1_has0: float
    f1_non0: float
    mae: float
    corr: float
    n_samples: int = 0
    n_samples_non0: int = 0

    def as_dict(self) -> dict[str, float]:
        return {key: float(getattr(self, key)) for key in REPORT_KEYS}

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2)

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_KEYS)
            writer.writerow([repr(float(getattr(self, k))) for k in REPORT_KEYS])


def _validate_pair(preds, labels, min_n=1):
    preds = np.asarray(preds, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if preds.shape != labels.shape:
        raise ValidationError("preds and labels must have equal length")
    if preds.size < min_n:
        raise ValidationError(f"need at least {min_n} samples")
    if not (np.isfinite(preds).all() and np.isfinite(labels).all()):
        raise ValidationError("non-finite metric inputs")
    return preds, labels


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def acc7(preds, labels) -> float:
    """Seven-class accuracy over integers in [-3, 3]."""
    preds, labels = _validate_pair(preds, labels)
    if np.abs(labels).max() > 3:
        raise ValidationError("labels outside [-3, 3]")
    p = np.clip(round_half_away(preds), -3, 3)
    y = round_half_away(labels)
    return float(np.mean(p == y))


def _binary_f1(pred_pos: np.ndarray, label_pos: np.ndarray) -> float:
    tp = np.sum(pred_pos & label_pos)
    fp = np.sum(pred_pos & ~label_pos)
    fn = np.sum(~pred_pos & label_pos)
    if 2 * tp + fp + fn == 0:
        return 0.0
    return float(2 * tp / (2 * tp + fp + fn))


def acc2_f1(preds, labels, convention: str) -> tuple[float, float]:
    """Binary accuracy and F1; positive sentiment is the positive class."""
    preds, labels = _validate_pair(preds, labels)
    if convention == "has0":
        pred_pos = preds >= 0
        label_pos = labels >= 0
    elif convention == "non0":
        keep = labels != 0
        if not keep.any():
            raise ValidationError("no samples left after non-0 exclusion")
        preds, labels = preds[keep], labels[keep]
        pred_pos = preds > 0
        label_pos = labels > 0
    else:
        raise ValidationError(f"unknown convention {convention!r}")
    acc = float(np.mean(pred_pos == label_pos))
    return acc, _binary_f1(pred_pos, label_pos)


def mae(preds, labels) -> float:
    preds, labels = _validate_pair(preds, labels)
    return float(np.mean(np.abs(preds - labels)))


def pearson_corr(preds, labels) -> float:
    preds, labels = _validate_pair(preds, labels, min_n=2)
    if np.std(preds) == 0 or np.std(labels) == 0:
        raise ValidationError("zero variance input to Pearson correlation")
    return float(np.corrcoef(preds, labels)[0, 1])


def compute_report(preds, labels) -> MetricsReport:
    preds_arr, labels_arr = _validate_pair(preds, labels)
    acc_has0, f1_has0 = acc2_f1(preds_arr, labels_arr, "has0")
    acc_non0, f1_non0 = acc2_f1(preds_arr, labels_arr, "non0")
    return MetricsReport(
        acc7=acc7(preds_arr, labels_arr),
        acc2_has0=acc_has0,
        acc2_non0=acc_non0,
        f1_has0=f1_has0,
        f1_non0=f1_non0,
        mae=mae(preds_arr, labels_arr),
        corr=pearson_corr(preds_arr, labels_arr),
        n_samples=int(preds_arr.size),
        n_samples_non0=int(np.sum(labels_arr != 0)),
    )
