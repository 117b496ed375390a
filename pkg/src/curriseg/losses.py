"""Pixel-weighted BCE and soft-IoU losses with exact gradients w.r.t. logits.

Probabilities are sigmoid(logits) clamped to [1e-7, 1-1e-7]; the clamp sits
inside the differentiated expression, so the analytic gradients match finite
differences everywhere (the gradient is zero where the clamp is active).
Batched (N, H, W) entry points serve the trainer; Grid2D wrappers carry the
single-image contract. The weighted BCE normalizes by the weight sum; the
weighted soft IoU uses a smoothing constant of 1 in both numerator and
denominator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import BitMask, Grid2D

__all__ = [
    "CLAMP_LO",
    "CLAMP_HI",
    "LossBreakdown",
    "sigmoid",
    "batch_weighted_bce",
    "batch_weighted_iou",
    "weighted_bce",
    "weighted_iou",
    "curriculum_loss",
    "anti_loss",
]

CLAMP_LO = 1e-7
CLAMP_HI = 1.0 - 1e-7


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class LossBreakdown:
    """One sample's loss terms; total = sample_weight_applied * (bce + iou)."""

    bce: float
    iou: float
    total: float
    sample_weight_applied: float


def _clamped_probs(logits: np.ndarray):
    raw = sigmoid(logits)
    p = np.clip(raw, CLAMP_LO, CLAMP_HI)
    inside = (raw > CLAMP_LO) & (raw < CLAMP_HI)
    return p, inside


def _check_shapes(logits, targets, weights):
    if logits.shape != targets.shape or logits.shape != weights.shape:
        raise ValueError(
            f"shape mismatch: logits {logits.shape}, targets {targets.shape}, "
            f"weights {weights.shape}"
        )


def batch_weighted_bce(logits: np.ndarray, targets: np.ndarray,
                       weights: np.ndarray):
    """Per-sample weight-normalized BCE over (N, H, W) stacks.

    Returns (values (N,), grads (N, H, W)) where grads are the gradient of
    each per-sample value with respect to that sample's logits.
    """
    _check_shapes(logits, targets, weights)
    p, inside = _clamped_probs(logits)
    wsum = weights.sum(axis=(-2, -1))
    if np.any(wsum <= 0.0):
        raise ValueError("pixel weights must not sum to zero")
    terms = -(targets * np.log(p) + (1.0 - targets) * np.log1p(-p))
    values = (weights * terms).sum(axis=(-2, -1)) / wsum
    grads = weights * (p - targets) * inside / wsum[..., None, None]
    return values, grads


def batch_weighted_iou(logits: np.ndarray, targets: np.ndarray,
                       weights: np.ndarray):
    """Per-sample weighted soft-IoU loss, smoothing constant 1.

    value = 1 - (sum(W*p*y) + 1) / (sum(W*(p + y - p*y)) + 1), soft p.
    Returns (values (N,), grads (N, H, W)).
    """
    _check_shapes(logits, targets, weights)
    p, inside = _clamped_probs(logits)
    num = (weights * p * targets).sum(axis=(-2, -1)) + 1.0
    den = (weights * (p + targets - p * targets)).sum(axis=(-2, -1)) + 1.0
    values = 1.0 - num / den
    dvalue_dp = weights * (
        num[..., None, None] * (1.0 - targets) - targets * den[..., None, None]
    ) / (den ** 2)[..., None, None]
    grads = dvalue_dp * p * (1.0 - p) * inside
    return values, grads


def _as_batch(logits: Grid2D, target: BitMask, pixel_weights: Grid2D):
    z = logits.values[None, :, :]
    y = target.bits.astype(np.float64)[None, :, :]
    w = pixel_weights.values[None, :, :]
    return z, y, w


def weighted_bce(logits: Grid2D, target: BitMask, pixel_weights: Grid2D):
    """Single-image weighted BCE; returns (value, gradient grid)."""
    z, y, w = _as_batch(logits, target, pixel_weights)
    values, grads = batch_weighted_bce(z, y, w)
    return float(values[0]), Grid2D(grads[0])


def weighted_iou(logits: Grid2D, target: BitMask, pixel_weights: Grid2D):
    """Single-image weighted soft-IoU loss; returns (value, gradient grid)."""
    z, y, w = _as_batch(logits, target, pixel_weights)
    values, grads = batch_weighted_iou(z, y, w)
    return float(values[0]), Grid2D(grads[0])


def curriculum_loss(logits: Grid2D, target: BitMask, pixel_weights: Grid2D,
                    sample_weight: float):
    """Sample-weighted sum of both losses; returns (LossBreakdown, gradient)."""
    if not (np.isfinite(sample_weight) and 0.0 <= sample_weight <= 1.0):
        raise ValueError(f"sample weight must be in [0, 1], got {sample_weight}")
    z, y, w = _as_batch(logits, target, pixel_weights)
    bce_vals, bce_grads = batch_weighted_bce(z, y, w)
    iou_vals, iou_grads = batch_weighted_iou(z, y, w)
    bce = float(bce_vals[0])
    iou = float(iou_vals[0])
    breakdown = LossBreakdown(
        bce=bce,
        iou=iou,
        total=sample_weight * (bce + iou),
        sample_weight_applied=sample_weight,
    )
    grad = Grid2D(sample_weight * (bce_grads[0] + iou_grads[0]))
    return breakdown, grad


def anti_loss(logits: Grid2D, target: BitMask):
    """BCE + IoU with uniform pixel weights and sample weight 1."""
    ones = Grid2D(np.ones_like(logits.values))
    return curriculum_loss(logits, target, ones, 1.0)
