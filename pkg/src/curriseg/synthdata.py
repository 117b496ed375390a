"""Synthetic context-entangled scenes: camouflaged ellipses in matched noise.

Background and foreground share one band-limited texture spectrum; they
differ only by an independent phase draw and an intensity offset
(1 - alpha) * intensity_gap, so alpha = 1 means the object is invisible to
first-order statistics and only texture seams and spatial structure remain.
Also provides label corruptions (outlier and ambiguous-boundary masks),
test-time degradations, and the on-disk dataset format (PGM + JSON manifest).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .grid import BitMask, Grid2D, SeededRng, read_mask_pgm, read_pgm, write_mask_pgm, write_pgm

__all__ = [
    "CORRUPTION_KINDS",
    "DEGRADATION_KINDS",
    "SceneSpec",
    "Sample",
    "DegradationSpec",
    "generate_dataset",
    "corrupt_labels",
    "degrade",
    "degrade_dataset",
    "save_dataset",
    "load_dataset",
    "MANIFEST_NAME",
]

CORRUPTION_KINDS = ("none", "outlier_label", "ambiguous_boundary")
DEGRADATION_KINDS = ("blur", "low_light", "haze", "noise")

MANIFEST_NAME = "manifest.json"
_MANIFEST_FORMAT = "curriseg-dataset-v1"

_AREA_LO = 0.05
_AREA_HI = 0.50
_MAX_DRAWS = 200

# Stream-id layout: generation uses small per-sample offsets, corruption and
# degradation use high disjoint bases so a shared master seed cannot collide.
_STREAM_CORRUPT = 1 << 32
_STREAM_DEGRADE = 1 << 33
TEST_STREAM_BASE = 1 << 40


@dataclass(frozen=True)
class SceneSpec:
    """Generator knobs: image size, camouflage level, texture band, offset."""

    size: int = 48
    alpha: float = 0.8
    texture_band: tuple = (0.55, 1.35)
    intensity_gap: float = 0.4

    def __post_init__(self):
        if self.size < 8:
            raise ValueError(f"size must be at least 8, got {self.size}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0,1], got {self.alpha}")
        low, high = self.texture_band
        if not (0.0 <= low < high):
            raise ValueError(f"texture band needs 0 <= low < high, got {self.texture_band}")
        if not np.isfinite(self.intensity_gap):
            raise ValueError("intensity_gap must be finite")


@dataclass(frozen=True)
class Sample:
    """One training example with its provenance flags."""

    id: int
    image: Grid2D
    mask: BitMask
    is_corrupted: bool = False
    corruption_kind: str = "none"

    def __post_init__(self):
        if self.corruption_kind not in CORRUPTION_KINDS:
            raise ValueError(f"unknown corruption kind {self.corruption_kind!r}")


@dataclass(frozen=True)
class DegradationSpec:
    """Test-time degradation: kind, strength, and the affected fraction."""

    kind: str
    strength: float
    ratio: float = 1.0

    def __post_init__(self):
        if self.kind not in DEGRADATION_KINDS:
            raise ValueError(f"unknown degradation kind {self.kind!r}")
        if not (np.isfinite(self.strength) and self.strength >= 0.0):
            raise ValueError(f"strength must be >= 0, got {self.strength}")
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio must be in [0,1], got {self.ratio}")


def _band_noise(gen: np.random.Generator, size: int, band) -> np.ndarray:
    """White noise confined to the annulus band, min-max rescaled to [0,1]."""
    low, high = band
    white = gen.standard_normal((size, size))
    coords = np.arange(size) - size // 2
    dist = np.hypot(coords[:, None], coords[None, :])
    radius_lo = low * size / 2.0
    radius_hi = high * size / 2.0
    keep = (dist >= radius_lo) & (dist <= radius_hi)
    spec = np.fft.fftshift(np.fft.fft2(white)) * keep
    tex = np.fft.ifft2(np.fft.ifftshift(spec)).real
    lo = tex.min()
    hi = tex.max()
    if hi == lo:
        return np.full((size, size), 0.5)
    return (tex - lo) / (hi - lo)


def _draw_ellipse(gen: np.random.Generator, size: int) -> np.ndarray:
    cy, cx = gen.uniform(0.25 * size, 0.75 * size, size=2)
    a = gen.uniform(0.08, 0.45) * size
    b = gen.uniform(0.08, 0.45) * size
    theta = gen.uniform(0.0, math.pi)
    yy, xx = np.mgrid[0:size, 0:size]
    dy = yy - cy
    dx = xx - cx
    ct, st = math.cos(theta), math.sin(theta)
    u = (dx * ct + dy * st) / a
    v = (-dx * st + dy * ct) / b
    return (u * u + v * v <= 1.0).astype(np.uint8)


def _ellipse_mask(gen: np.random.Generator, size: int) -> np.ndarray:
    """Random ellipse covering 5-50% of the image; bounded retries."""
    for _ in range(_MAX_DRAWS):
        mask = _draw_ellipse(gen, size)
        if _AREA_LO <= mask.mean() <= _AREA_HI:
            return mask
    raise RuntimeError(
        f"failed to draw a mask in the {_AREA_LO:.0%}-{_AREA_HI:.0%} area band"
    )


def generate_dataset(n: int, spec: SceneSpec, seed: int,
                     stream_base: int = 0) -> list:
    """Deterministic dataset of n samples; per-sample RNG streams.

    stream_base offsets the stream ids so disjoint splits (train vs test) can
    share a master seed without sharing any random draws.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    samples = []
    offset = (1.0 - spec.alpha) * spec.intensity_gap
    for i in range(n):
        bg_gen = SeededRng(seed, stream_base + 4 * i + 0).generator()
        fg_gen = SeededRng(seed, stream_base + 4 * i + 1).generator()
        shape_gen = SeededRng(seed, stream_base + 4 * i + 2).generator()
        bg = _band_noise(bg_gen, spec.size, spec.texture_band)
        fg = _band_noise(fg_gen, spec.size, spec.texture_band)
        mask = _ellipse_mask(shape_gen, spec.size)
        img = np.where(mask.astype(bool), fg + offset, bg)
        img = np.clip(img, 0.0, 1.0)
        samples.append(Sample(id=i, image=Grid2D(img), mask=BitMask(mask)))
    return samples


# ---------------------------------------------------------------------------
# Label corruption.

def _shift_bool(m: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(m)
    h, w = m.shape
    ys = slice(max(dy, 0), min(h + dy, h))
    xs = slice(max(dx, 0), min(w + dx, w))
    yt = slice(max(-dy, 0), min(h - dy, h))
    xt = slice(max(-dx, 0), min(w - dx, w))
    out[ys, xs] = m[yt, xt]
    return out


def _dilate(m: np.ndarray) -> np.ndarray:
    out = m.copy()
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            out |= _shift_bool(m, dy, dx)
    return out


def _erode(m: np.ndarray) -> np.ndarray:
    out = m.copy()
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            out &= _shift_bool(m, dy, dx)
    return out


def _morph(m: np.ndarray, grow: bool, steps: int) -> np.ndarray:
    for _ in range(steps):
        m = _dilate(m) if grow else _erode(m)
    return m


def _outlier_mask(gen: np.random.Generator, true_mask: np.ndarray,
                  size: int) -> np.ndarray:
    """Ellipse disjoint from the true object where possible."""
    truth = true_mask.astype(bool)
    best = None
    best_overlap = None
    for _ in range(_MAX_DRAWS):
        cand = _draw_ellipse(gen, size)
        if not _AREA_LO <= cand.mean() <= _AREA_HI:
            continue
        overlap = int(np.count_nonzero(cand.astype(bool) & truth))
        if overlap == 0:
            return cand
        if best_overlap is None or overlap < best_overlap:
            best, best_overlap = cand, overlap
    if best is None:
        raise RuntimeError("failed to draw an outlier mask")
    return best


def _ambiguous_mask(gen: np.random.Generator, true_mask: np.ndarray) -> np.ndarray:
    """Dilate or erode the boundary by 1-3 px, keeping the area band valid."""
    steps = int(gen.integers(1, 4))
    grow = bool(gen.random() < 0.5)
    m = true_mask.astype(bool)
    for attempt_grow in (grow, not grow):
        for attempt_steps in range(steps, 0, -1):
            cand = _morph(m, attempt_grow, attempt_steps)
            if _AREA_LO <= cand.mean() <= _AREA_HI:
                return cand.astype(np.uint8)
    return true_mask.copy()


def corrupt_labels(samples, outlier_fraction: float, ambiguous_fraction: float,
                   seed: int) -> list:
    """Replace or perturb a deterministic subset of ground-truth masks."""
    if outlier_fraction < 0 or ambiguous_fraction < 0:
        raise ValueError("corruption fractions must be >= 0")
    if outlier_fraction + ambiguous_fraction > 1.0:
        raise ValueError("corruption fractions must sum to at most 1")
    n = len(samples)
    n_out = int(round(outlier_fraction * n))
    n_amb = int(round(ambiguous_fraction * n))
    picker = SeededRng(seed, _STREAM_CORRUPT).generator()
    order = picker.permutation(n)
    outlier_ids = {samples[j].id for j in order[:n_out]}
    ambiguous_ids = {samples[j].id for j in order[n_out : n_out + n_amb]}
    out = []
    for s in samples:
        if s.id in outlier_ids:
            gen = SeededRng(seed, _STREAM_CORRUPT + 1 + s.id).generator()
            new_mask = _outlier_mask(gen, s.mask.bits, s.mask.height)
            out.append(Sample(s.id, s.image, BitMask(new_mask), True, "outlier_label"))
        elif s.id in ambiguous_ids:
            gen = SeededRng(seed, _STREAM_CORRUPT + 1 + s.id).generator()
            new_mask = _ambiguous_mask(gen, s.mask.bits)
            out.append(Sample(s.id, s.image, BitMask(new_mask), True, "ambiguous_boundary"))
        else:
            out.append(s)
    return out


# ---------------------------------------------------------------------------
# Test-time degradations.

def _box_blur(vals: np.ndarray, width: int) -> np.ndarray:
    pad = width // 2
    kernel = np.full(width, 1.0 / width)
    rows = np.pad(vals, ((0, 0), (pad, pad)), mode="reflect")
    tmp = np.array([np.convolve(row, kernel, mode="valid") for row in rows])
    cols = np.pad(tmp, ((pad, pad), (0, 0)), mode="reflect")
    return np.array([np.convolve(col, kernel, mode="valid") for col in cols.T]).T


def degrade(image: Grid2D, spec: DegradationSpec, rng: SeededRng) -> Grid2D:
    """Apply one degradation; strength 0 is the identity for every kind."""
    if spec.strength == 0.0:
        return image
    vals = image.values
    if spec.kind == "blur":
        width = 2 * int(round(spec.strength)) + 1
        if width <= 1:
            return image
        return Grid2D(_box_blur(vals, width))
    if spec.kind == "low_light":
        return Grid2D(vals / (1.0 + spec.strength))
    if spec.kind == "haze":
        f = spec.strength / (1.0 + spec.strength)
        return Grid2D(vals * (1.0 - f) + 0.8 * f)
    # noise
    gen = rng.generator() if isinstance(rng, SeededRng) else rng
    noisy = vals + gen.uniform(-spec.strength, spec.strength, size=vals.shape)
    return Grid2D(np.clip(noisy, 0.0, 1.0))


def degrade_dataset(samples, spec: DegradationSpec, seed: int) -> list:
    """Degrade a round(ratio * n) subset chosen deterministically from seed."""
    n = len(samples)
    k = int(round(spec.ratio * n))
    picker = SeededRng(seed, _STREAM_DEGRADE).generator()
    chosen = {samples[j].id for j in picker.permutation(n)[:k]}
    out = []
    for s in samples:
        if s.id in chosen:
            img = degrade(s.image, spec, SeededRng(seed, _STREAM_DEGRADE + 1 + s.id))
            out.append(Sample(s.id, img, s.mask, s.is_corrupted, s.corruption_kind))
        else:
            out.append(s)
    return out


# ---------------------------------------------------------------------------
# On-disk dataset format: PGM rasters plus one JSON manifest.

def _write_split(root: str, subdir: str, samples) -> list:
    os.makedirs(os.path.join(root, subdir), exist_ok=True)
    entries = []
    for s in samples:
        img_rel = f"{subdir}/img_{s.id:04d}.pgm"
        msk_rel = f"{subdir}/msk_{s.id:04d}.pgm"
        write_pgm(s.image, os.path.join(root, img_rel))
        write_mask_pgm(s.mask, os.path.join(root, msk_rel))
        entries.append({
            "id": s.id,
            "image": img_rel,
            "mask": msk_rel,
            "is_corrupted": s.is_corrupted,
            "corruption_kind": s.corruption_kind,
        })
    return entries


def save_dataset(root: str, train, test, spec: SceneSpec, seed: int,
                 corruption: dict | None = None) -> dict:
    """Write train/test splits and the manifest; returns the manifest."""
    manifest = {
        "format": _MANIFEST_FORMAT,
        "seed": int(seed),
        "spec": {
            "size": spec.size,
            "alpha": spec.alpha,
            "texture_band": list(spec.texture_band),
            "intensity_gap": spec.intensity_gap,
        },
        "corruption": corruption or {"outlier_fraction": 0.0,
                                     "ambiguous_fraction": 0.0},
        "n_train": len(train),
        "n_test": len(test),
        "n_corrupted": sum(1 for s in train if s.is_corrupted),
        "train": _write_split(root, "train", train),
        "test": _write_split(root, "test", test),
    }
    with open(os.path.join(root, MANIFEST_NAME), "w", encoding="ascii") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return manifest


def _load_split(root: str, entries) -> list:
    samples = []
    for e in entries:
        samples.append(Sample(
            id=int(e["id"]),
            image=read_pgm(os.path.join(root, e["image"])),
            mask=read_mask_pgm(os.path.join(root, e["mask"])),
            is_corrupted=bool(e["is_corrupted"]),
            corruption_kind=e["corruption_kind"],
        ))
    return samples


def load_dataset(root: str):
    """Read a dataset directory; returns (train, test, manifest)."""
    path = os.path.join(root, MANIFEST_NAME)
    with open(path, encoding="ascii") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != _MANIFEST_FORMAT:
        raise ValueError(f"unrecognized dataset manifest in {path}")
    train = _load_split(root, manifest["train"])
    test = _load_split(root, manifest["test"])
    return train, test, manifest
