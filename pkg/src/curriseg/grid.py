"""Dense 2-D grids, binary masks, seeded RNG streams, and rank-order helpers.

Grid2D and BitMask are the common currency of the package: images,
probability maps and weight maps travel as Grid2D, ground-truth and
frequency-passband masks as BitMask. Both freeze their backing arrays after
construction so every downstream computation is reproducible bit for bit.
Includes PGM (P2/P5) serialization for both types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Grid2D",
    "BitMask",
    "SeededRng",
    "percentile_threshold",
    "minmax_normalize",
    "iou",
    "read_pgm",
    "write_pgm",
    "read_mask_pgm",
    "write_mask_pgm",
]


@dataclass(frozen=True)
class Grid2D:
    """Immutable height x width raster of finite float64 scalars."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"Grid2D needs a 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("Grid2D values must all be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @classmethod
    def from_flat(cls, height: int, width: int, flat) -> "Grid2D":
        arr = np.asarray(flat, dtype=np.float64)
        if arr.size != height * width:
            raise ValueError(
                f"expected {height * width} values, got {arr.size}"
            )
        return cls(arr.reshape(height, width))


@dataclass(frozen=True)
class BitMask:
    """Immutable height x width mask of {0, 1} bits."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.array(self.bits)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"BitMask needs a 2-D array, got shape {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("BitMask bits must be 0 or 1")
        arr = arr.astype(np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    def area_fraction(self) -> float:
        return float(self.bits.mean())


@dataclass(frozen=True)
class SeededRng:
    """A (seed, stream) pair naming one independent deterministic RNG stream.

    Identical pairs reproduce identical sequences; distinct stream ids give
    statistically independent streams via numpy's SeedSequence mixing.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        if self.seed < 0 or self.stream < 0:
            raise ValueError("seed and stream must be non-negative")

    def generator(self) -> np.random.Generator:
        return np.random.default_rng([self.seed, self.stream])


def percentile_threshold(scores, p: float) -> float:
    """Nearest-rank percentile: ascending sort, element at index ceil(p*N)-1."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("percentile_threshold needs at least one score")
    if not np.all(np.isfinite(arr)):
        raise ValueError("scores must be finite")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must be in (0, 1], got {p}")
    idx = math.ceil(p * arr.size) - 1
    idx = min(max(idx, 0), arr.size - 1)
    return float(np.sort(arr)[idx])


def minmax_normalize(values) -> np.ndarray | None:
    """Map values to [0, 1] by (v - min) / (max - min).

    Returns None when max == min (degenerate cohort sentinel); the caller
    decides what a zero-range cohort means.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("minmax_normalize needs at least one value")
    if not np.all(np.isfinite(arr)):
        raise ValueError("values must be finite")
    lo = float(arr.min())
    hi = float(arr.max())
    if hi == lo:
        return None
    return (arr - lo) / (hi - lo)


def iou(a: BitMask, b: BitMask) -> float:
    """Intersection over union of two masks; both empty counts as 1."""
    if a.bits.shape != b.bits.shape:
        raise ValueError(
            f"mask shapes differ: {a.bits.shape} vs {b.bits.shape}"
        )
    inter = int(np.count_nonzero(a.bits & b.bits))
    union = int(np.count_nonzero(a.bits | b.bits))
    if union == 0:
        return 1.0
    return inter / union


# ---------------------------------------------------------------------------
# PGM serialization (P2 ascii / P5 binary), 8-bit, maxval 255.

def _quantize(values: np.ndarray) -> np.ndarray:
    clipped = np.clip(values, 0.0, 1.0)
    return np.floor(clipped * 255.0 + 0.5).astype(np.uint8)


def write_pgm(grid: Grid2D, path, binary: bool = False) -> None:
    """Write a [0,1] grid as an 8-bit PGM (ascii P2 by default)."""
    data = _quantize(grid.values)
    _write_pgm_bytes(data, path, binary)


def write_mask_pgm(mask: BitMask, path, binary: bool = False) -> None:
    """Write a mask as a 0/255 PGM."""
    data = (mask.bits * np.uint8(255)).astype(np.uint8)
    _write_pgm_bytes(data, path, binary)


def _write_pgm_bytes(data: np.ndarray, path, binary: bool) -> None:
    h, w = data.shape
    if binary:
        header = f"P5\n{w} {h}\n255\n".encode("ascii")
        payload = header + data.tobytes()
    else:
        lines = "\n".join(" ".join(str(v) for v in row) for row in data)
        payload = f"P2\n{w} {h}\n255\n{lines}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(payload)


def _read_pgm_array(path) -> np.ndarray:
    """Parse a P2 or P5 PGM into a float array scaled to [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens = []
    pos = 0
    # Tokenize the header: magic, width, height, maxval. '#' starts a comment.
    while len(tokens) < 4:
        if pos >= len(raw):
            raise ValueError(f"truncated PGM header in {path}")
        ch = raw[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            nl = raw.find(b"\n", pos)
            pos = len(raw) if nl < 0 else nl + 1
        else:
            end = pos
            while end < len(raw) and not raw[end : end + 1].isspace():
                end += 1
            tokens.append(raw[pos:end])
            pos = end
    magic = tokens[0].decode("ascii")
    w, h, maxval = (int(t) for t in tokens[1:4])
    if magic not in ("P2", "P5"):
        raise ValueError(f"unsupported PGM magic {magic!r} in {path}")
    if not (0 < maxval <= 255):
        raise ValueError(f"unsupported PGM maxval {maxval} in {path}")
    if magic == "P5":
        pos += 1  # single whitespace after maxval
        data = np.frombuffer(raw, dtype=np.uint8, count=h * w, offset=pos)
    else:
        stripped = b"\n".join(line.split(b"#", 1)[0]
                              for line in raw[pos:].split(b"\n"))
        body = stripped.split()
        if len(body) < h * w:
            raise ValueError(f"truncated PGM body in {path}")
        data = np.array([int(t) for t in body[: h * w]], dtype=np.int64)
        if data.min() < 0 or data.max() > maxval:
            raise ValueError(f"PGM sample out of range in {path}")
    return data.reshape(h, w).astype(np.float64) / float(maxval)


def read_pgm(path) -> Grid2D:
    """Read a P2/P5 PGM as a [0,1] grid."""
    return Grid2D(_read_pgm_array(path))


def read_mask_pgm(path) -> BitMask:
    """Read a P2/P5 PGM as a mask; samples >= half maxval count as set."""
    vals = _read_pgm_array(path)
    return BitMask((vals >= 0.5).astype(np.uint8))
