"""Temporal-statistics sample weights and entropy-based pixel weights.

Each sample keeps a ring buffer of its recent difficulty scores; the buffer's
population mean and variance, min-max normalized over the active cohort,
drive three multiplicative factors (mean penalty, variance band, outlier
penalty) above a weight floor. Pixel weights suppress high-entropy pixels
early and anneal toward uniform as the curriculum clock runs out.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid2D, minmax_normalize

__all__ = [
    "SIGMA_VARIANTS",
    "BETA_VARIANTS",
    "ABLATABLE",
    "DifficultyBuffer",
    "SampleWeightStats",
    "PixelWeightConfig",
    "temporal_stats",
    "sample_weights",
    "pixel_entropy",
    "entropy_values",
    "beta_coefficient",
    "pixel_weight_values",
    "pixel_weight_matrix",
]

SIGMA_VARIANTS = ("gaussian", "triangular", "quadratic")
BETA_VARIANTS = ("linear", "exponential")
ABLATABLE = frozenset({"drop_mu", "drop_sigma", "drop_out"})


@dataclass
class DifficultyBuffer:
    """Ring buffer of the last `capacity` difficulty scores for one sample."""

    capacity: int = 10
    entries: deque = field(default_factory=deque)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError(f"capacity must be positive, got {self.capacity}")
        self.entries = deque(self.entries, maxlen=self.capacity)

    def push(self, score: float) -> None:
        if not (np.isfinite(score) and 0.0 <= score <= 1.0):
            raise ValueError(f"difficulty score out of [0,1]: {score}")
        self.entries.append(float(score))

    @property
    def count(self) -> int:
        return len(self.entries)


def temporal_stats(buffer: DifficultyBuffer):
    """Population mean and variance of the buffered scores."""
    if buffer.count == 0:
        raise ValueError("temporal_stats needs a non-empty buffer")
    arr = np.fromiter(buffer.entries, dtype=np.float64)
    mu = float(arr.mean())
    if float(arr.max()) == float(arr.min()):
        # constant history has zero variance by definition; the two-pass
        # formula below can leave ~1e-32 of rounding residue, which a later
        # min-max normalization would blow up into a full-range signal
        return mu, 0.0
    var = float(((arr - mu) ** 2).mean())
    return mu, var


@dataclass(frozen=True)
class SampleWeightStats:
    """Every intermediate of one sample's weight, for diagnostics dumps."""

    mu: float
    var: float
    mu_norm: float
    var_norm: float
    w_mu: float
    w_sigma: float
    w_out: float
    w: float


def _sigma_factor(var_norm: float, sigma_star: float, gamma: float,
                  variant: str) -> float:
    dev = var_norm - sigma_star
    if variant == "gaussian":
        return math.exp(-(dev * dev) / (2.0 * gamma * gamma))
    if variant == "triangular":
        return max(0.0, 1.0 - abs(dev) / gamma)
    if variant == "quadratic":
        return max(0.0, 1.0 - (dev / gamma) ** 2)
    raise ValueError(f"unknown sigma variant {variant!r}")


def sample_weights(cohort: dict, sigma_star: float = 0.5, gamma: float = 0.2,
                   w_min_s: float = 0.1, sigma_variant: str = "gaussian",
                   ablate=frozenset()) -> dict:
    """Weights for a cohort of sample-id -> (mu, var) temporal statistics.

    Statistics are min-max normalized across the cohort; a degenerate
    statistic (zero range) is replaced by its neutral value (mu_norm 0,
    var_norm sigma_star) so it applies no penalty. Factors named in `ablate`
    are forced to 1.
    """
    if not cohort:
        raise ValueError("sample_weights needs a non-empty cohort")
    unknown = set(ablate) - ABLATABLE
    if unknown:
        raise ValueError(f"unknown ablation flags {sorted(unknown)}")
    if sigma_variant not in SIGMA_VARIANTS:
        raise ValueError(f"unknown sigma variant {sigma_variant!r}")
    ids = sorted(cohort)
    mus = np.array([cohort[i][0] for i in ids], dtype=np.float64)
    vars_ = np.array([cohort[i][1] for i in ids], dtype=np.float64)
    mu_norm = minmax_normalize(mus)
    if mu_norm is None:
        mu_norm = np.zeros_like(mus)
    var_norm = minmax_normalize(vars_)
    if var_norm is None:
        var_norm = np.full_like(vars_, sigma_star)
    out = {}
    for idx, sid in enumerate(ids):
        mn = float(mu_norm[idx])
        vn = float(var_norm[idx])
        w_mu = 1.0 if "drop_mu" in ablate else 1.0 - mn
        w_sigma = (1.0 if "drop_sigma" in ablate
                   else _sigma_factor(vn, sigma_star, gamma, sigma_variant))
        w_out = 1.0 if "drop_out" in ablate else 1.0 - mn * (1.0 - vn)
        w = w_min_s + (1.0 - w_min_s) * w_mu * w_sigma * w_out
        out[sid] = SampleWeightStats(
            mu=float(mus[idx]), var=float(vars_[idx]), mu_norm=mn, var_norm=vn,
            w_mu=w_mu, w_sigma=w_sigma, w_out=w_out, w=w,
        )
    return out


def entropy_values(p: np.ndarray) -> np.ndarray:
    """Binary entropy in bits, elementwise, with 0*log2(0) = 0."""
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    inner = (p > 0.0) & (p < 1.0)
    q = p[inner]
    out[inner] = -(q * np.log2(q) + (1.0 - q) * np.log2(1.0 - q))
    return np.clip(out, 0.0, 1.0)


def pixel_entropy(probability: float) -> float:
    """Binary entropy of one probability, in bits."""
    if not (np.isfinite(probability) and 0.0 <= probability <= 1.0):
        raise ValueError(f"probability out of [0,1]: {probability}")
    return float(entropy_values(np.array([probability]))[0])


@dataclass(frozen=True)
class PixelWeightConfig:
    """Floor, curriculum horizon, and decay shape for pixel weights."""

    w_min: float = 0.1
    t_c: int = 50
    beta_variant: str = "linear"

    def __post_init__(self):
        if not 0.0 < self.w_min < 1.0:
            raise ValueError(f"w_min must be in (0,1), got {self.w_min}")
        if self.t_c < 1:
            raise ValueError(f"t_c must be positive, got {self.t_c}")
        if self.beta_variant not in BETA_VARIANTS:
            raise ValueError(f"unknown beta variant {self.beta_variant!r}")


def beta_coefficient(t: int, config: PixelWeightConfig) -> float:
    """Entropy-suppression coefficient on the curriculum clock."""
    if not 0 <= t <= config.t_c:
        raise ValueError(f"t={t} outside [0, {config.t_c}]")
    if config.beta_variant == "exponential":
        return math.exp(-t / config.t_c)
    return 1.0 - t / config.t_c


def pixel_weight_values(probs: np.ndarray, t: int,
                        config: PixelWeightConfig) -> np.ndarray:
    """W = w_min + (1 - w_min) * (1 - beta(t) * H(p)), elementwise."""
    beta = beta_coefficient(t, config)
    ent = entropy_values(probs)
    return config.w_min + (1.0 - config.w_min) * (1.0 - beta * ent)


def pixel_weight_matrix(probabilities: Grid2D, t: int,
                        config: PixelWeightConfig) -> Grid2D:
    """Grid2D wrapper over pixel_weight_values."""
    if probabilities.values.min() < 0.0 or probabilities.values.max() > 1.0:
        raise ValueError("probabilities must lie in [0,1]")
    return Grid2D(pixel_weight_values(probabilities.values, t, config))
