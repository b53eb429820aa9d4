"""Recovered-vs-truth scoring: stroke counts, directions, DTW distance.

Strokes are matched greedily on orientation-agnostic DTW cost; a matched
pair's direction is correct when aligning the recovered stroke forward
beats aligning it reversed. Stroke WRITING order is deliberately not
scored: discovery order is a scan order, not a temporal claim.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .trace_model import OnlineTrace, Stroke, resample

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is in the default install
    njit = None

__all__ = [
    "MatchedPair",
    "EvalReport",
    "dtw",
    "match_strokes",
    "direction_agreement",
    "evaluate",
    "aggregate_rows",
]


def _accumulate(cost: np.ndarray) -> float:
    n, m = cost.shape
    acc = np.empty((n, m))
    acc[0, 0] = cost[0, 0]
    for j in range(1, m):
        acc[0, j] = acc[0, j - 1] + cost[0, j]
    for i in range(1, n):
        acc[i, 0] = acc[i - 1, 0] + cost[i, 0]
    for i in range(1, n):
        for j in range(1, m):
            best = acc[i - 1, j - 1]
            if acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if acc[i, j - 1] < best:
                best = acc[i, j - 1]
            acc[i, j] = cost[i, j] + best
    return acc[n - 1, m - 1]


if njit is not None:
    _accumulate = njit(cache=True)(_accumulate)


def _as_xy(seq) -> np.ndarray:
    if isinstance(seq, Stroke):
        pts = np.array(seq.xy(), dtype=np.float64)
    else:
        pts = np.asarray(seq, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError("point sequence must be 2-D")
        pts = pts[:, :2]
    if len(pts) == 0:
        raise ValueError("point sequence must be nonempty")
    return pts


def dtw(a, b) -> float:
    """Classic dynamic time warping with Euclidean point cost.

    Full alignment, no window; returns the total alignment cost. Inputs
    may be Strokes, (n, 2) arrays, or lists of points.
    """
    pa = _as_xy(a)
    pb = _as_xy(b)
    dx = pa[:, 0][:, None] - pb[:, 0][None, :]
    dy = pa[:, 1][:, None] - pb[:, 1][None, :]
    cost = np.sqrt(dx * dx + dy * dy)
    return float(_accumulate(cost))


def direction_agreement(truth_stroke, recovered_stroke) -> bool:
    """True when the recovered stroke runs the way the truth was written."""
    t = _as_xy(truth_stroke)
    r = _as_xy(recovered_stroke)
    return dtw(t, r) <= dtw(t, r[::-1])


@dataclass(frozen=True)
class MatchedPair:
    truth_id: int
    recovered_id: int
    dtw_per_point: float
    direction_correct: bool


@dataclass
class EvalReport:
    truth_strokes: int
    recovered_strokes: int
    matched_pairs: list[MatchedPair] = field(default_factory=list)
    unmatched_truth: list[int] = field(default_factory=list)
    unmatched_recovered: list[int] = field(default_factory=list)
    mean_dtw_per_point: float | None = None
    direction_accuracy: float | None = None

    def to_dict(self) -> dict:
        return {
            "truth_strokes": self.truth_strokes,
            "recovered_strokes": self.recovered_strokes,
            "matched_pairs": [
                {
                    "truth_id": p.truth_id,
                    "recovered_id": p.recovered_id,
                    "dtw_per_point": round(p.dtw_per_point, 4),
                    "direction_correct": p.direction_correct,
                }
                for p in self.matched_pairs
            ],
            "unmatched_truth": self.unmatched_truth,
            "unmatched_recovered": self.unmatched_recovered,
            "mean_dtw_per_point": (
                None if self.mean_dtw_per_point is None else round(self.mean_dtw_per_point, 4)
            ),
            "direction_accuracy": (
                None if self.direction_accuracy is None else round(self.direction_accuracy, 4)
            ),
        }


def match_strokes(
    truth: OnlineTrace, recovered: OnlineTrace, max_per_point_cost: float
) -> EvalReport:
    """Greedy one-to-one matching on min-over-orientation DTW cost.

    Expects strokes already resampled to a common spacing. Candidate
    pairs are taken in ascending cost while both ids are unused and the
    per-point cost stays under ``max_per_point_cost``; everything else is
    reported unmatched. Aggregate fields are left for evaluate() to fill.
    """
    candidates = []
    for t in truth.strokes:
        ta = _as_xy(t)
        for r in recovered.strokes:
            ra = _as_xy(r)
            forward = dtw(ta, ra)
            backward = dtw(ta, ra[::-1])
            cost = min(forward, backward)
            per_point = cost / max(len(ta), len(ra))
            candidates.append((cost, t.id, r.id, per_point, forward <= backward))
    candidates.sort(key=lambda c: (c[0], c[1], c[2]))
    used_truth: set[int] = set()
    used_recovered: set[int] = set()
    pairs = []
    for cost, tid, rid, per_point, forward_ok in candidates:
        if tid in used_truth or rid in used_recovered:
            continue
        if per_point > max_per_point_cost:
            continue
        used_truth.add(tid)
        used_recovered.add(rid)
        pairs.append(MatchedPair(tid, rid, per_point, forward_ok))
    return EvalReport(
        truth_strokes=len(truth.strokes),
        recovered_strokes=len(recovered.strokes),
        matched_pairs=pairs,
        unmatched_truth=[s.id for s in truth.strokes if s.id not in used_truth],
        unmatched_recovered=[s.id for s in recovered.strokes if s.id not in used_recovered],
    )


def _resampled(trace: OnlineTrace, spacing: float) -> OnlineTrace:
    return replace(trace, strokes=[resample(s, spacing) for s in trace.strokes])


def evaluate(
    truth: OnlineTrace,
    recovered: OnlineTrace,
    spacing: float = 1.0,
    match_threshold_scale: float = 3.0,
) -> EvalReport:
    """Resample both traces to 1 px spacing, match, and fill aggregates.

    The match acceptance threshold is ``match_threshold_scale`` times the
    pen-width estimate (the truth's avg_width when available); a "match"
    further away than a few pen widths is noise, not a recovery.
    """
    if tuple(truth.image_size) != tuple(recovered.image_size):
        raise ValueError(
            f"image sizes differ: {tuple(truth.image_size)} vs {tuple(recovered.image_size)}"
        )
    pen = truth.avg_width or recovered.avg_width or 1.0
    report = match_strokes(
        _resampled(truth, spacing),
        _resampled(recovered, spacing),
        max_per_point_cost=match_threshold_scale * pen,
    )
    if report.matched_pairs:
        report.mean_dtw_per_point = float(
            np.mean([p.dtw_per_point for p in report.matched_pairs])
        )
        report.direction_accuracy = sum(
            p.direction_correct for p in report.matched_pairs
        ) / len(report.matched_pairs)
    return report


def aggregate_rows(rows: list[dict]) -> dict:
    """Corpus-level summary over per-item evaluation rows.

    direction_accuracy is pooled over matched pairs across the corpus;
    dtw_within_pen_fraction counts items whose mean per-point DTW stays
    within their own pen width.
    """
    n = len(rows)
    exact = sum(1 for r in rows if r["stroke_count_exact"])
    matched = sum(r["matched"] for r in rows)
    correct = sum(r["direction_correct"] for r in rows)
    dtw_ok = sum(1 for r in rows if r["dtw_within_pen"])
    dtw_values = [r["mean_dtw_per_point"] for r in rows if r["mean_dtw_per_point"] is not None]
    return {
        "n_items": n,
        "stroke_count_exact_fraction": exact / n if n else None,
        "direction_accuracy": correct / matched if matched else None,
        "dtw_within_pen_fraction": dtw_ok / n if n else None,
        "mean_dtw_per_point": float(np.mean(dtw_values)) if dtw_values else None,
    }
