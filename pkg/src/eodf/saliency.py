"""Spectral-residual saliency and ratio-driven raster compression.

The saliency detector works in the frequency domain: the log-amplitude
spectrum of the input is compared against its local average, and the
residual is transformed back to image space.  Regions whose spectral
signature deviates from the smooth background pop out as high scores.
A quantile threshold on the score map then discards a caller-chosen
fraction of pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .imageio import Image, Mask, resize_bilinear, to_grayscale, upsample_mask_nearest

__all__ = [
    "DEFAULT_ANALYSIS_SIZE",
    "LOG_EPSILON",
    "MaskedImage",
    "RatioThreshold",
    "SaliencyMap",
    "binarize",
    "compress",
    "compute_saliency",
    "srvs_compress",
    "threshold_for_ratio",
]

# Amplitudes are offset by this before the log so zero bins stay finite.
LOG_EPSILON = 1e-9

# Side of the square analysis grid the input is shrunk to before scoring.
DEFAULT_ANALYSIS_SIZE = 64

MIN_SALIENCY_DIM = 8


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    """Per-pixel conspicuity scores, float64 in [0, 1], shape (height, width)."""

    scores: np.ndarray

    def __post_init__(self):
        s = self.scores
        if not isinstance(s, np.ndarray) or s.dtype != np.float64 or s.ndim != 2:
            raise ValueError("scores must be a (height, width) float64 array")

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]


@dataclass(frozen=True, eq=False)
class MaskedImage:
    """An image with discarded pixels zeroed, plus the full-resolution mask."""

    image: Image
    mask: Mask
    discard_ratio: float

    def __post_init__(self):
        if (self.mask.height, self.mask.width) != (self.image.height, self.image.width):
            raise ValueError("mask dimensions must match the image")
        if not 0.0 <= self.discard_ratio <= 1.0:
            raise ValueError(f"discard_ratio out of range: {self.discard_ratio}")


class RatioThreshold(NamedTuple):
    """Result of :func:`threshold_for_ratio`.

    ``achieved_discard`` is the discard fraction the threshold produces on
    the analysed map itself; ``ties_at_threshold`` counts scores exactly
    equal to the threshold.  Tied scores fall with everything at or below
    the threshold, so a large tie count pushes the achieved ratio above
    target by up to ties/N.
    """

    threshold: float
    achieved_discard: float
    ties_at_threshold: int


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def compute_saliency(
    gray: Image,
    *,
    spectrum_filter_size: int = 3,
    blur_sigma: float | None = None,
) -> SaliencyMap:
    """Score each pixel of a greyscale image by its spectral residual.

    Pipeline: 2-D DFT; split into amplitude and phase; log the amplitude
    (offset ``LOG_EPSILON``); subtract a ``spectrum_filter_size`` square
    mean filter of the log spectrum (edge-replicated) to get the
    residual; invert the DFT of ``exp(residual) * exp(i * phase)``; take
    the squared magnitude; Gaussian-blur it (sigma defaults to width/8,
    kernel radius ``ceil(3*sigma)``, edge-replicated); min-max normalize
    to [0, 1].

    A constant input produces an identically-zero map rather than NaNs.
    """
    if gray.channels != 1:
        raise ValueError("compute_saliency expects a single-channel image")
    h, w = gray.height, gray.width
    if h < MIN_SALIENCY_DIM or w < MIN_SALIENCY_DIM:
        raise ValueError(f"input must be at least {MIN_SALIENCY_DIM}x{MIN_SALIENCY_DIM}, got {w}x{h}")
    if spectrum_filter_size < 1 or spectrum_filter_size % 2 == 0:
        raise ValueError("spectrum_filter_size must be odd and positive")

    field = gray.pixels[:, :, 0].astype(np.float64)
    spectrum = np.fft.fft2(field)
    amplitude = np.abs(spectrum)
    phase = np.angle(spectrum)

    log_amp = np.log(amplitude + LOG_EPSILON)
    smoothed = ndimage.uniform_filter(log_amp, size=spectrum_filter_size, mode="nearest")
    residual = log_amp - smoothed

    back = np.fft.ifft2(np.exp(residual) * np.exp(1j * phase))
    raw = back.real**2 + back.imag**2

    sigma = (w / 8.0) if blur_sigma is None else float(blur_sigma)
    if sigma <= 0:
        raise ValueError(f"blur_sigma must be positive, got {sigma}")
    kernel = _gaussian_kernel(sigma)
    raw = ndimage.correlate1d(raw, kernel, axis=0, mode="nearest")
    raw = ndimage.correlate1d(raw, kernel, axis=1, mode="nearest")

    lo = float(raw.min())
    hi = float(raw.max())
    if hi > lo:
        scores = (raw - lo) / (hi - lo)
    else:
        scores = np.zeros_like(raw)
    return SaliencyMap(scores)


def threshold_for_ratio(saliency: SaliencyMap, target_discard: float) -> RatioThreshold:
    """Pick the score threshold that discards ``target_discard`` of the map.

    The threshold is the order statistic at rank ``floor(target * N)`` in
    ascending order (the k-th smallest score), so that discarding every
    score <= threshold removes k pixels when scores are distinct.  A
    target of 0 yields a threshold strictly below every score.
    """
    if not 0.0 <= target_discard <= 1.0:
        raise ValueError(f"target_discard out of range: {target_discard}")
    flat = saliency.scores.reshape(-1)
    n = flat.size
    k = math.floor(target_discard * n)
    if k == 0:
        # Scores live in [0, 1]; -1 sits strictly below all of them.
        return RatioThreshold(-1.0, 0.0, 0)
    ordered = np.sort(flat, kind="stable")
    threshold = float(ordered[k - 1])
    discarded = int(np.searchsorted(ordered, threshold, side="right"))
    ties = discarded - int(np.searchsorted(ordered, threshold, side="left"))
    return RatioThreshold(threshold, discarded / n, ties)


def binarize(saliency: SaliencyMap, threshold: float) -> Mask:
    """Retain pixels scoring strictly above ``threshold``.

    The comparison is strict ``>``: scores exactly equal to the threshold
    are discarded along with everything below it.
    """
    return Mask((saliency.scores > threshold).astype(np.uint8))


def compress(image: Image, mask: Mask) -> MaskedImage:
    """Zero out the pixels a small analysis-grid mask marks as discardable.

    The mask is upsampled to the image dimensions with nearest-neighbour
    sampling, then applied per pixel across all channels.  The reported
    ``discard_ratio`` is measured on the upsampled mask.
    """
    full = upsample_mask_nearest(mask, image.width, image.height)
    kept = image.pixels * full.bits[:, :, np.newaxis]
    zeros = full.bits.size - int(full.bits.sum())
    return MaskedImage(Image(kept), full, zeros / full.bits.size)


def srvs_compress(
    image: Image,
    target_discard: float,
    analysis_size: int = DEFAULT_ANALYSIS_SIZE,
    *,
    spectrum_filter_size: int = 3,
    blur_sigma: float | None = None,
) -> MaskedImage:
    """Full compression pipeline: saliency-score, threshold, mask, apply.

    The input is greyscaled and shrunk to ``analysis_size`` square before
    scoring; the binary mask is upsampled back to the input size.  With
    ``target_discard`` 0 the output image equals the input exactly.
    """
    if analysis_size < MIN_SALIENCY_DIM:
        raise ValueError(f"analysis_size must be >= {MIN_SALIENCY_DIM}")
    gray = to_grayscale(image)
    small = resize_bilinear(gray, analysis_size, analysis_size)
    saliency = compute_saliency(
        small, spectrum_filter_size=spectrum_filter_size, blur_sigma=blur_sigma
    )
    choice = threshold_for_ratio(saliency, target_discard)
    mask = binarize(saliency, choice.threshold)
    return compress(image, mask)
