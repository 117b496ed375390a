"""Checkpoint-based difficulty scoring and warm-up subset selection.

A frozen model checkpoint scores every sample as 1 - IoU between its
binarized prediction and the ground truth; the admission fraction p(t) then
grows from p_min to 1 over the curriculum window and the active subset is
everything at or below the nearest-rank percentile. Logits of exactly zero
binarize to foreground (>= rule).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import model
from .grid import BitMask, Grid2D, iou, percentile_threshold

__all__ = [
    "SCHEDULE_KINDS",
    "DifficultyTable",
    "ScheduleVariant",
    "binarize_logits",
    "difficulty_score",
    "selection_fraction",
    "active_subset",
    "capped_subset",
    "evaluate_difficulties",
    "difficulty_csv_rows",
]

SCHEDULE_KINDS = ("linear", "quadratic", "sqrt")

# Fixed evaluation chunk so results are bit-identical for any thread count.
_CHUNK = 16


@dataclass(frozen=True)
class DifficultyTable:
    """Difficulty of every sample at one epoch, as seen by one checkpoint."""

    epoch: int
    checkpoint_epoch: int
    scores: dict = field(default_factory=dict)

    def __post_init__(self):
        for sid, d in self.scores.items():
            if not (np.isfinite(d) and 0.0 <= d <= 1.0):
                raise ValueError(f"difficulty for sample {sid} out of [0,1]: {d}")

    def ordered_ids(self) -> list:
        return sorted(self.scores)


@dataclass(frozen=True)
class ScheduleVariant:
    """Admission schedule: p(1) = p_min, p(t_c) = 1, three growth shapes."""

    kind: str = "linear"
    p_min: float = 0.6
    t_c: int = 50

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not 0.0 < self.p_min <= 1.0:
            raise ValueError(f"p_min must be in (0,1], got {self.p_min}")
        if self.t_c < 1:
            raise ValueError(f"t_c must be positive, got {self.t_c}")


def binarize_logits(logits: Grid2D) -> BitMask:
    """Threshold at probability 0.5, i.e. logit 0; ties go to foreground."""
    return BitMask((logits.values >= 0.0).astype(np.uint8))


def difficulty_score(prediction_logits: Grid2D, ground_truth: BitMask) -> float:
    """d = 1 - IoU(binarized prediction, ground truth)."""
    return 1.0 - iou(binarize_logits(prediction_logits), ground_truth)


def selection_fraction(t: int, schedule: ScheduleVariant) -> float:
    """Admitted fraction p(t) on the curriculum clock t in [1, t_c]."""
    if not 1 <= t <= schedule.t_c:
        raise ValueError(f"t={t} outside [1, {schedule.t_c}]")
    if schedule.t_c == 1:
        return 1.0
    frac = (t - 1) / (schedule.t_c - 1)
    if schedule.kind == "quadratic":
        frac = frac ** 2
    elif schedule.kind == "sqrt":
        frac = math.sqrt(frac)
    return schedule.p_min + (1.0 - schedule.p_min) * frac


def active_subset(table: DifficultyTable, p: float) -> set:
    """Ids with difficulty at or below the nearest-rank percentile.

    Ties at the threshold are all admitted, so the set can be larger than
    ceil(p*N); see capped_subset for the exact-count variant.
    """
    ids = table.ordered_ids()
    scores = [table.scores[i] for i in ids]
    threshold = percentile_threshold(scores, p)
    return {i for i, d in zip(ids, scores) if d <= threshold}


def capped_subset(table: DifficultyTable, p: float) -> list:
    """Exactly ceil(p*N) easiest ids, threshold ties broken by ascending id.

    This is the admission rule the training loop uses: it keeps the trained
    count at the nearest-rank size even when difficulty scores tie, which is
    what makes the per-epoch gradient budget follow ceil(p*N) exactly. The
    result is a subset of active_subset(table, p), returned in ascending id
    order.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"admission fraction must be in (0, 1], got {p}")
    ids = table.ordered_ids()
    count = min(len(ids), math.ceil(p * len(ids)))
    ranked = sorted(ids, key=lambda i: (table.scores[i], i))[:count]
    return sorted(ranked)


def _chunk_scores(checkpoint: model.ConvNetParams, chunk) -> dict:
    images = np.stack([s.image.values for s in chunk])
    masks = np.stack([s.mask.bits for s in chunk]).astype(bool)
    logits = model.forward_values(checkpoint, images)
    pred = logits >= 0.0
    inter = (pred & masks).sum(axis=(1, 2))
    union = (pred | masks).sum(axis=(1, 2))
    with np.errstate(invalid="ignore"):
        d = np.where(union == 0, 0.0, 1.0 - inter / np.maximum(union, 1))
    return {s.id: float(v) for s, v in zip(chunk, d)}


def evaluate_difficulties(checkpoint: model.ConvNetParams, dataset,
                          epoch: int = 0, checkpoint_epoch: int = 0,
                          max_threads: int = 0) -> DifficultyTable:
    """Score every sample with the frozen checkpoint.

    Samples are processed in fixed chunks in ascending-id order; max_threads
    only distributes whole chunks, so the table is bit-identical for any
    thread count (including 0, the sequential default).
    """
    ordered = sorted(dataset, key=lambda s: s.id)
    chunks = [ordered[i : i + _CHUNK] for i in range(0, len(ordered), _CHUNK)]
    if max_threads > 0 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=max_threads) as pool:
            partials = list(pool.map(lambda c: _chunk_scores(checkpoint, c), chunks))
    else:
        partials = [_chunk_scores(checkpoint, c) for c in chunks]
    scores = {}
    for part in partials:
        scores.update(part)
    return DifficultyTable(epoch=epoch, checkpoint_epoch=checkpoint_epoch,
                           scores=scores)


def difficulty_csv_rows(tables) -> list:
    """Flatten tables to (epoch, sample_id, d) rows for CSV export."""
    rows = []
    for table in tables:
        for sid in table.ordered_ids():
            rows.append((table.epoch, sid, table.scores[sid]))
    return rows
