"""Sectional widths and the average stroke width that sizes the tracer.

A sectional width is the length of one uninterrupted horizontal run of
foreground pixels. Rows that cut strokes transversally contribute runs
near the true pen width; those dominate the run-width histogram, which
is what the default estimator keys on.
"""
from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .raster import BinaryImage

__all__ = [
    "EmptySignatureError",
    "WidthMode",
    "SectionalWidths",
    "WidthEstimate",
    "sectional_widths",
    "average_width",
]


class EmptySignatureError(Exception):
    """The image contains no foreground runs to measure."""


class WidthMode(enum.Enum):
    # frequency-weighted mean of the k most frequent run widths
    HISTOGRAM_WEIGHTED = "histogram"
    # plain mean of the k longest runs
    TOP_K_MEAN = "topk"


@dataclass(frozen=True)
class SectionalWidths:
    runs: list[int]  # every run length, all rows pooled
    per_row: list[tuple[int, list[int]]]  # (row index, run lengths), debug aid


@dataclass(frozen=True)
class WidthEstimate:
    avg_width: float
    mode: WidthMode
    k: int
    # histogram mode: the (width, frequency) pairs used; top-k mode: the runs used
    support: list[tuple[int, int]] | list[int]


def _row_runs(row: np.ndarray) -> list[int]:
    padded = np.concatenate(([0], row.view(np.int8), [0]))
    edges = np.diff(padded)
    starts = np.nonzero(edges == 1)[0]
    ends = np.nonzero(edges == -1)[0]
    return (ends - starts).tolist()


def sectional_widths(img: BinaryImage) -> SectionalWidths:
    """Maximal horizontal foreground runs, row by row."""
    runs: list[int] = []
    per_row: list[tuple[int, list[int]]] = []
    for y in range(img.height):
        row_runs = _row_runs(img.mask[y])
        if row_runs:
            per_row.append((y, row_runs))
            runs.extend(row_runs)
    return SectionalWidths(runs, per_row)


def average_width(
    sw: SectionalWidths,
    mode: WidthMode = WidthMode.HISTOGRAM_WEIGHTED,
    k: int = 3,
) -> WidthEstimate:
    """Average stroke width from the pooled run lengths.

    HISTOGRAM_WEIGHTED selects the k run widths with the largest
    frequencies (ties broken toward the larger width) and returns their
    frequency-weighted mean. TOP_K_MEAN returns the arithmetic mean of
    the k largest runs. Both lie within [min(runs), max(runs)].
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not sw.runs:
        raise EmptySignatureError("no foreground runs")
    if mode is WidthMode.HISTOGRAM_WEIGHTED:
        freq = Counter(sw.runs)
        selected = sorted(freq.items(), key=lambda wf: (-wf[1], -wf[0]))[:k]
        total = sum(f for _, f in selected)
        avg = sum(w * f for w, f in selected) / total
        return WidthEstimate(avg, mode, k, sorted(selected))
    if mode is WidthMode.TOP_K_MEAN:
        top = sorted(sw.runs, reverse=True)[: min(k, len(sw.runs))]
        return WidthEstimate(sum(top) / len(top), mode, k, top)
    raise ValueError(f"unknown width mode {mode!r}")
