"""Evaluation measures: MAE, IoU, Dice, and F-beta (beta^2 = 0.3).

Predictions binarize at probability 0.5 (ties to foreground) for the region
metrics; MAE compares soft probabilities directly. Dataset-level values are
plain means of per-sample values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import BitMask, Grid2D

__all__ = [
    "MetricReport",
    "mae",
    "f_beta",
    "dice",
    "iou_score",
    "report_from_arrays",
]


@dataclass(frozen=True)
class MetricReport:
    """Dataset means of the per-sample metrics."""

    mae: float
    iou: float
    dice: float
    f_beta: float
    n_samples: int


def _check(pred: Grid2D, target: BitMask):
    if (pred.height, pred.width) != (target.height, target.width):
        raise ValueError(
            f"shape mismatch: prediction {(pred.height, pred.width)} vs "
            f"target {(target.height, target.width)}"
        )


def mae(prediction_probs: Grid2D, target: BitMask) -> float:
    """Mean absolute difference between probabilities and the 0/1 target."""
    _check(prediction_probs, target)
    return float(np.abs(prediction_probs.values - target.bits).mean())


def _counts(prediction_probs: Grid2D, target: BitMask):
    pred = prediction_probs.values >= 0.5
    truth = target.bits.astype(bool)
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    return tp, fp, fn


def f_beta(prediction_probs: Grid2D, target: BitMask, beta_sq: float = 0.3) -> float:
    """F-measure of the binarized prediction; 0 whenever a denominator is 0."""
    _check(prediction_probs, target)
    tp, fp, fn = _counts(prediction_probs, target)
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    den = beta_sq * precision + recall
    if den == 0.0:
        return 0.0
    return (1.0 + beta_sq) * precision * recall / den


def dice(prediction_probs: Grid2D, target: BitMask) -> float:
    """Dice overlap of the binarized prediction; both empty counts as 1."""
    _check(prediction_probs, target)
    tp, fp, fn = _counts(prediction_probs, target)
    den = 2 * tp + fp + fn
    if den == 0:
        return 1.0
    return 2.0 * tp / den


def iou_score(prediction_probs: Grid2D, target: BitMask) -> float:
    """IoU of the binarized prediction; both empty counts as 1."""
    _check(prediction_probs, target)
    tp, fp, fn = _counts(prediction_probs, target)
    union = tp + fp + fn
    if union == 0:
        return 1.0
    return tp / union


def report_from_arrays(probs: np.ndarray, targets: np.ndarray,
                       beta_sq: float = 0.3) -> MetricReport:
    """Dataset report from (N, H, W) probability and 0/1 target stacks."""
    if probs.shape != targets.shape or probs.ndim != 3:
        raise ValueError(
            f"need matching (N, H, W) stacks, got {probs.shape} and {targets.shape}"
        )
    pred = probs >= 0.5
    truth = targets.astype(bool)
    tp = (pred & truth).sum(axis=(1, 2)).astype(np.float64)
    fp = (pred & ~truth).sum(axis=(1, 2)).astype(np.float64)
    fn = (~pred & truth).sum(axis=(1, 2)).astype(np.float64)
    mae_vals = np.abs(probs - truth).mean(axis=(1, 2))
    union = tp + fp + fn
    iou_vals = np.where(union > 0, tp / np.maximum(union, 1), 1.0)
    dice_den = 2 * tp + fp + fn
    dice_vals = np.where(dice_den > 0, 2 * tp / np.maximum(dice_den, 1), 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
        recall = np.where(tp + fn > 0, tp / np.maximum(tp + fn, 1), 0.0)
        fden = beta_sq * precision + recall
        f_vals = np.where(fden > 0, (1 + beta_sq) * precision * recall / np.where(fden > 0, fden, 1.0), 0.0)
    return MetricReport(
        mae=float(mae_vals.mean()),
        iou=float(iou_vals.mean()),
        dice=float(dice_vals.mean()),
        f_beta=float(f_vals.mean()),
        n_samples=int(probs.shape[0]),
    )
