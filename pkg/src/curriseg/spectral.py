"""Centered 2-D DFT, circular low-pass masks, and spectral-blindness filtering.

The forward transform is unnormalized and the inverse divides by H*W; spectra
are stored in centered frequency coordinates u in [-floor(H/2), ceil(H/2)-1]
(and likewise for v), with DC at the array center. The FFT is used as the
engine; the tests cross-check it against a literal O(N^2) transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import BitMask, Grid2D

__all__ = [
    "SpectrumGrid",
    "dft2",
    "idft2",
    "circular_lowpass_mask",
    "square_lowpass_mask",
    "apply_mask",
    "sbft",
    "ablation_filter",
    "filter_values",
    "allpass_ratio",
]

FILTER_KINDS = ("circular", "square", "progressive")


@dataclass(frozen=True)
class SpectrumGrid:
    """Complex spectrum in centered frequency coordinates, DC at the center."""

    coefficients: np.ndarray

    def __post_init__(self):
        arr = np.array(self.coefficients, dtype=np.complex128)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"SpectrumGrid needs a 2-D array, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("SpectrumGrid coefficients must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "coefficients", arr)

    @property
    def height(self) -> int:
        return int(self.coefficients.shape[0])

    @property
    def width(self) -> int:
        return int(self.coefficients.shape[1])

    def coefficient(self, u: int, v: int) -> complex:
        """Coefficient at centered frequency (u, v)."""
        return complex(
            self.coefficients[u + self.height // 2, v + self.width // 2]
        )


def _freqs(n: int) -> np.ndarray:
    return np.arange(n) - n // 2


def dft2(image: Grid2D) -> SpectrumGrid:
    """Forward 2-D DFT, unnormalized, re-indexed to centered coordinates."""
    spec = np.fft.fftshift(np.fft.fft2(image.values))
    return SpectrumGrid(spec)


def idft2(spectrum: SpectrumGrid) -> Grid2D:
    """Inverse 2-D DFT (divides by H*W); the imaginary residue is discarded.

    For spectra arising from real inputs (possibly masked by a symmetric
    passband) the residue is at rounding-noise level; the tests bound it.
    """
    vals = np.fft.ifft2(np.fft.ifftshift(spectrum.coefficients))
    return Grid2D(vals.real)


def circular_lowpass_mask(height: int, width: int, r: float) -> BitMask:
    """Passband of centered coordinates with sqrt(u^2+v^2) <= r*min(H,W)/2."""
    return BitMask(_passband(height, width, r, "circular").astype(np.uint8))


def square_lowpass_mask(height: int, width: int, r: float) -> BitMask:
    """Passband of centered coordinates with max(|u|,|v|) <= r*min(H,W)/2."""
    return BitMask(_passband(height, width, r, "square").astype(np.uint8))


def _passband(height: int, width: int, r: float, kind: str) -> np.ndarray:
    if r <= 0:
        raise ValueError(f"cutoff ratio must be positive, got {r}")
    radius = r * min(height, width) / 2.0
    u = _freqs(height)[:, None].astype(np.float64)
    v = _freqs(width)[None, :].astype(np.float64)
    if kind == "circular":
        return np.hypot(u, v) <= radius
    if kind == "square":
        return np.maximum(np.abs(u), np.abs(v)) <= radius
    raise ValueError(f"unknown mask kind {kind!r}")


def apply_mask(spectrum: SpectrumGrid, mask: BitMask) -> SpectrumGrid:
    if (spectrum.height, spectrum.width) != (mask.height, mask.width):
        raise ValueError("spectrum and mask dimensions differ")
    return SpectrumGrid(spectrum.coefficients * mask.bits)


def allpass_ratio(height: int, width: int) -> float:
    """Smallest documented cutoff ratio whose circular mask is all-ones."""
    return math.sqrt(2.0) * max(height, width) / min(height, width)


def filter_values(values: np.ndarray, r: float, kind: str = "circular",
                  epoch_fraction: float = 1.0) -> np.ndarray:
    """Low-pass filter an (..., H, W) array of real images.

    kind 'progressive' interpolates the circular cutoff from the all-pass
    ratio (epoch_fraction 0, identity) down to r (epoch_fraction 1). When the
    resulting passband keeps every bin the input is returned unchanged, so an
    all-ones mask is exactly the identity, not a DFT round-trip.
    """
    if kind not in FILTER_KINDS:
        raise ValueError(f"unknown filter kind {kind!r}")
    h, w = values.shape[-2], values.shape[-1]
    if kind == "progressive":
        if not 0.0 <= epoch_fraction <= 1.0:
            raise ValueError(f"epoch_fraction must be in [0,1], got {epoch_fraction}")
        full = allpass_ratio(h, w)
        r_eff = full + (r - full) * epoch_fraction
        band = _passband(h, w, r_eff, "circular")
    else:
        band = _passband(h, w, r, kind)
    if band.all():
        return values
    shifted = np.fft.ifftshift(band)
    spec = np.fft.fft2(values, axes=(-2, -1)) * shifted
    return np.fft.ifft2(spec, axes=(-2, -1)).real


def sbft(image: Grid2D, r: float) -> Grid2D:
    """Spectral-blindness transform: keep only the circular low-pass band."""
    out = filter_values(image.values, r, "circular")
    if out is image.values:
        return image
    return Grid2D(out)


def ablation_filter(image: Grid2D, kind: str, r: float,
                    epoch_fraction: float = 1.0) -> Grid2D:
    """Square or progressive variant of sbft (circular also accepted)."""
    out = filter_values(image.values, r, kind, epoch_fraction)
    if out is image.values:
        return image
    return Grid2D(out)
