"""Global thresholding from the two dominant intensity-histogram peaks.

Scanned script images have one histogram hump for ink and one for paper.
The threshold is placed at the midpoint of the two strongest smoothed
peaks; smoothing plus a minimum peak separation keeps the two selected
maxima from being adjacent bins of a single hump.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import BinaryImage, GrayImage

__all__ = [
    "HistogramReport",
    "NoSecondPeakError",
    "histogram",
    "find_two_peaks",
    "binarize",
    "SMOOTH_WINDOW",
    "MIN_PEAK_SEPARATION",
]

SMOOTH_WINDOW = 5
MIN_PEAK_SEPARATION = 16


class NoSecondPeakError(Exception):
    """Fewer than two qualifying histogram maxima were found."""


@dataclass
class HistogramReport:
    counts: np.ndarray  # (256,) pixel tally per intensity
    smoothed: np.ndarray  # (256,) moving average of counts
    peak_lo: int | None
    peak_hi: int | None
    threshold: int
    fallback: bool  # True when the min/max-intensity fallback was used

    def to_dict(self) -> dict:
        return {
            "counts": [int(c) for c in self.counts],
            "smoothed": [float(s) for s in self.smoothed],
            "peak_lo": self.peak_lo,
            "peak_hi": self.peak_hi,
            "threshold": self.threshold,
            "fallback": self.fallback,
        }


def histogram(img: GrayImage) -> np.ndarray:
    """Counts per intensity: counts[v] = number of pixels with value v."""
    return np.bincount(img.pixels.ravel(), minlength=256).astype(np.int64)


def _smoothed_sums(counts: np.ndarray) -> np.ndarray:
    # Integer window sums so plateau comparisons stay exact; divide by the
    # window only when reporting.
    padded = np.pad(np.asarray(counts, dtype=np.int64), SMOOTH_WINDOW // 2, mode="edge")
    return np.convolve(padded, np.ones(SMOOTH_WINDOW, dtype=np.int64), mode="valid")


def _local_maxima(sums: np.ndarray, counts: np.ndarray) -> list[int]:
    """Indices of local maxima of the smoothed curve.

    A maximum must be strictly higher than both neighbors; a plateau of
    equal values counts once, represented by the intensity with the
    largest raw count inside it (leftmost on ties). Runs touching either
    end of the range do not qualify.
    """
    maxima: list[int] = []
    n = len(sums)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sums[j + 1] == sums[i]:
            j += 1
        if i > 0 and j < n - 1 and sums[i - 1] < sums[i] and sums[j + 1] < sums[i]:
            rep = i + int(np.argmax(counts[i : j + 1]))
            maxima.append(rep)
        i = j + 1
    return maxima


def find_two_peaks(counts: np.ndarray) -> tuple[int, int]:
    """Pick the two strongest smoothed histogram peaks, low intensity first.

    Peaks closer than MIN_PEAK_SEPARATION levels are treated as one hump.
    Raises NoSecondPeakError when no qualifying pair exists (constant or
    degenerate histograms).
    """
    counts = np.asarray(counts, dtype=np.int64)
    sums = _smoothed_sums(counts)
    maxima = _local_maxima(sums, counts)
    ranked = sorted(maxima, key=lambda v: (-sums[v], v))
    if not ranked:
        raise NoSecondPeakError("no interior histogram maxima")
    first = ranked[0]
    second = next((m for m in ranked[1:] if abs(m - first) >= MIN_PEAK_SEPARATION), None)
    if second is None:
        raise NoSecondPeakError(
            f"no second peak at least {MIN_PEAK_SEPARATION} levels from {first}"
        )
    return (first, second) if first < second else (second, first)


def _apply_threshold(pixels: np.ndarray, threshold: int, invert: bool) -> np.ndarray:
    if invert:
        return pixels > threshold
    return pixels <= threshold


def binarize(img: GrayImage, invert: bool = False) -> tuple[BinaryImage, HistogramReport]:
    """Threshold at the midpoint of the two dominant histogram peaks.

    Foreground is the dark side by default (ink on paper); ``invert``
    flips that for light-on-dark sources. Degenerate histograms fall back
    to the midpoint of the lowest and highest present intensities, and a
    constant image binarizes to all background.
    """
    counts = histogram(img)
    sums = _smoothed_sums(counts)
    smoothed = sums / float(SMOOTH_WINDOW)
    try:
        peak_lo, peak_hi = find_two_peaks(counts)
        threshold = (peak_lo + peak_hi) // 2
        report = HistogramReport(counts, smoothed, peak_lo, peak_hi, threshold, False)
        mask = _apply_threshold(img.pixels, threshold, invert)
    except NoSecondPeakError:
        present = np.nonzero(counts)[0]
        lo, hi = int(present[0]), int(present[-1])
        threshold = (lo + hi) // 2
        report = HistogramReport(counts, smoothed, None, None, threshold, True)
        if lo == hi:
            mask = np.zeros_like(img.pixels, dtype=bool)
        else:
            mask = _apply_threshold(img.pixels, threshold, invert)
    return BinaryImage(mask), report
