"""Recovered trace data model: strokes, JSON/CSV serialization, SVG rendering.

Timestamps are tracer tick indices, not real time; the JSON carries a
"timing": "synthetic-ticks" field so downstream consumers cannot mistake
them for captured dynamics.
"""
from __future__ import annotations

import base64
import io
import json
import math
from dataclasses import dataclass, field

from .raster import BinaryImage, GrayImage

__all__ = [
    "Stroke",
    "OnlineTrace",
    "TraceSchemaError",
    "TIMING_LABEL",
    "to_json",
    "from_json",
    "to_svg",
    "to_csv",
    "resample",
]

TIMING_LABEL = "synthetic-ticks"

_PALETTE = [
    "#d62728",
    "#1f77b4",
    "#2ca02c",
    "#9467bd",
    "#ff7f0e",
    "#17becf",
    "#e377c2",
    "#8c564b",
]


class TraceSchemaError(Exception):
    """Trace document is not valid JSON or violates the trace schema."""


@dataclass(frozen=True)
class Stroke:
    """One pen-down segment: ordered sub-pixel points with tick timestamps."""

    id: int
    points: list[tuple[float, float, int]]

    def __post_init__(self):
        if not self.points:
            raise ValueError("stroke must contain at least one point")
        ticks = [t for _, _, t in self.points]
        if any(b <= a for a, b in zip(ticks, ticks[1:])):
            raise ValueError("stroke ticks must be strictly increasing")

    def xy(self) -> list[tuple[float, float]]:
        return [(x, y) for x, y, _ in self.points]

    def arc_length(self) -> float:
        pts = self.points
        return sum(
            math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(pts, pts[1:])
        )


@dataclass(frozen=True)
class OnlineTrace:
    source: str
    image_size: tuple[int, int]
    avg_width: float
    strokes: list[Stroke] = field(default_factory=list)

    def __post_init__(self):
        ids = [s.id for s in self.strokes]
        if ids != list(range(len(ids))):
            raise ValueError(f"stroke ids must be 0..n-1 in order, got {ids}")


def to_json(trace: OnlineTrace) -> bytes:
    """Serialize; reals carry at most 4 decimal places."""
    doc = {
        "source": trace.source,
        "image_size": [int(trace.image_size[0]), int(trace.image_size[1])],
        "avg_width": round(float(trace.avg_width), 4),
        "timing": TIMING_LABEL,
        "strokes": [
            {
                "id": s.id,
                "points": [[round(x, 4), round(y, 4), int(t)] for x, y, t in s.points],
            }
            for s in trace.strokes
        ],
    }
    return json.dumps(doc, separators=(",", ":")).encode("utf-8")


def _expect(doc: dict, key: str, kind: type, where: str):
    if key not in doc:
        raise TraceSchemaError(f"missing field {key!r} in {where}")
    value = doc[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise TraceSchemaError(f"field {key!r} in {where} must be a number")
        return float(value)
    if not isinstance(value, kind):
        raise TraceSchemaError(f"field {key!r} in {where} must be {kind.__name__}")
    return value


def from_json(data: bytes | str) -> OnlineTrace:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise TraceSchemaError(f"malformed JSON at byte offset {exc.pos}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise TraceSchemaError("trace document must be a JSON object")
    source = _expect(doc, "source", str, "trace")
    size = _expect(doc, "image_size", list, "trace")
    if len(size) != 2 or not all(isinstance(v, int) for v in size):
        raise TraceSchemaError("field 'image_size' must be [width, height] integers")
    avg_width = _expect(doc, "avg_width", float, "trace")
    strokes_doc = _expect(doc, "strokes", list, "trace")
    strokes = []
    for i, sdoc in enumerate(strokes_doc):
        if not isinstance(sdoc, dict):
            raise TraceSchemaError(f"stroke {i} must be an object")
        sid = _expect(sdoc, "id", int, f"stroke {i}")
        pts_doc = _expect(sdoc, "points", list, f"stroke {i}")
        points = []
        for j, p in enumerate(pts_doc):
            if not isinstance(p, list) or len(p) != 3:
                raise TraceSchemaError(f"field 'points'[{j}] of stroke {i} must be [x, y, t]")
            x, y, t = p
            if isinstance(x, bool) or isinstance(y, bool) or not isinstance(t, int):
                raise TraceSchemaError(f"field 'points'[{j}] of stroke {i} must be [x, y, t]")
            points.append((float(x), float(y), t))
        try:
            strokes.append(Stroke(sid, points))
        except ValueError as exc:
            raise TraceSchemaError(f"stroke {i}: {exc}") from exc
    try:
        return OnlineTrace(source, (size[0], size[1]), avg_width, strokes)
    except ValueError as exc:
        raise TraceSchemaError(str(exc)) from exc


def _png_data_uri(img: GrayImage | BinaryImage) -> str:
    import numpy as np
    from PIL import Image

    if isinstance(img, BinaryImage):
        grid = np.where(img.mask, 0, 255).astype("uint8")
    else:
        grid = img.pixels
    buf = io.BytesIO()
    Image.fromarray(grid, mode="L").save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def to_svg(
    trace: OnlineTrace,
    underlay: GrayImage | BinaryImage | None = None,
    stroke_width: float = 1.0,
) -> bytes:
    """Render one polyline path per stroke with an arrowhead at its end.

    Colors cycle through a fixed palette; an optional bitmap underlay is
    embedded as a base64 PNG. Stroke paths are the only <path> elements,
    so path count equals stroke count.
    """
    w, h = trace.image_size
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        "<defs>",
    ]
    colors = [_PALETTE[s.id % len(_PALETTE)] for s in trace.strokes]
    for s, color in zip(trace.strokes, colors):
        lines.append(
            f'<marker id="arrow-{s.id}" orient="auto" markerWidth="8" markerHeight="8" '
            f'refX="6" refY="3" markerUnits="strokeWidth">'
            f'<polygon points="0,0 7,3 0,6" fill="{color}"/></marker>'
        )
    lines.append("</defs>")
    if underlay is not None:
        lines.append(
            f'<image href="{_png_data_uri(underlay)}" x="0" y="0" width="{w}" height="{h}" '
            'preserveAspectRatio="none" image-rendering="pixelated" opacity="0.5"/>'
        )
    for s, color in zip(trace.strokes, colors):
        coords = " L ".join(f"{x:.4f} {y:.4f}" for x, y in s.xy())
        lines.append(
            f'<path d="M {coords}" fill="none" stroke="{color}" '
            f'stroke-width="{stroke_width}" stroke-linecap="round" '
            f'stroke-linejoin="round" marker-end="url(#arrow-{s.id})"/>'
        )
    lines.append("</svg>")
    return "\n".join(lines).encode("utf-8")


def to_csv(trace: OnlineTrace) -> str:
    """Flat per-point table for spreadsheet inspection."""
    rows = ["stroke_id,x,y,t"]
    for s in trace.strokes:
        rows.extend(f"{s.id},{x:.4f},{y:.4f},{t}" for x, y, t in s.points)
    return "\n".join(rows) + "\n"


def resample(stroke: Stroke, spacing: float) -> Stroke:
    """Resample to (near) uniform arc-length spacing.

    Points sit at arc distances 0, spacing, 2*spacing, ...; the final
    point of the stroke is always kept, so the last gap may be shorter.
    Ticks are renumbered 0..m-1 (timing is synthetic anyway). Single-point
    and zero-length strokes are returned unchanged.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    pts = stroke.xy()
    if len(pts) < 2:
        return stroke
    seg_lengths = [
        math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(pts, pts[1:])
    ]
    total = sum(seg_lengths)
    if total == 0.0:
        return stroke
    cumulative = [0.0]
    for length in seg_lengths:
        cumulative.append(cumulative[-1] + length)
    out = []
    k = 0
    seg = 0
    while True:
        target = k * spacing
        if target >= total:
            break
        while cumulative[seg + 1] <= target and seg < len(seg_lengths) - 1:
            seg += 1
        span = seg_lengths[seg]
        frac = 0.0 if span == 0 else (target - cumulative[seg]) / span
        ax, ay = pts[seg]
        bx, by = pts[seg + 1]
        out.append((ax + frac * (bx - ax), ay + frac * (by - ay)))
        k += 1
    out.append(pts[-1])
    return Stroke(stroke.id, [(x, y, i) for i, (x, y) in enumerate(out)])
