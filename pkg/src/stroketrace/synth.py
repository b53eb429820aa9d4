"""Synthetic ground truth: rasterize known trajectories into gray bitmaps.

Because no capture hardware provides paired offline/online data here,
evaluation inverts the problem: draw a known ordered trajectory, recover
it from the rendered bitmap, and score the recovery against the original.
Default intensities (ink 25, paper 230) with sigma-8 jitter produce the
two-hump histogram the binarizer expects while still exercising its peak
search nontrivially.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .raster import GrayImage
from .trace_model import OnlineTrace, Stroke

__all__ = [
    "ScriptSpec",
    "SpecValidationError",
    "CorpusParams",
    "rasterize",
    "corpus",
    "spec_to_json",
    "spec_from_json",
]

Polyline = list[tuple[float, float]]


class SpecValidationError(Exception):
    """A script spec violates one of its invariants; message names it."""


@dataclass(frozen=True)
class ScriptSpec:
    """A renderable script: known polylines plus rendering noise knobs."""

    image_size: tuple[int, int]
    pen_width: float
    strokes: list[Polyline] = field(default_factory=list)
    noise: float = 0.0  # salt-and-pepper probability
    background: int = 230
    foreground: int = 25
    jitter_sigma: float = 8.0  # 0 disables intensity jitter
    seed: int = 0

    def __post_init__(self):
        w, h = self.image_size
        if w < 1 or h < 1:
            raise SpecValidationError(f"image_size must be positive, got {(w, h)}")
        if self.pen_width < 1:
            raise SpecValidationError(f"pen_width must be >= 1, got {self.pen_width}")
        if not 0.0 <= self.noise <= 0.2:
            raise SpecValidationError(f"noise must lie in [0, 0.2], got {self.noise}")
        if self.jitter_sigma < 0:
            raise SpecValidationError("jitter_sigma must be >= 0")
        for intensity, name in ((self.background, "background"), (self.foreground, "foreground")):
            if not 0 <= intensity <= 255:
                raise SpecValidationError(f"{name} intensity must lie in [0, 255]")
        for i, polyline in enumerate(self.strokes):
            if not polyline:
                raise SpecValidationError(f"stroke {i} has no points")
            for x, y in polyline:
                if not (0 <= x <= w - 1 and 0 <= y <= h - 1):
                    raise SpecValidationError(
                        f"stroke {i} point ({x}, {y}) outside image bounds {w}x{h}"
                    )


def spec_to_json(spec: ScriptSpec) -> bytes:
    doc = {
        "image_size": [spec.image_size[0], spec.image_size[1]],
        "pen_width": spec.pen_width,
        "strokes": [[[x, y] for x, y in poly] for poly in spec.strokes],
        "noise": spec.noise,
        "background": spec.background,
        "foreground": spec.foreground,
        "jitter_sigma": spec.jitter_sigma,
        "seed": spec.seed,
    }
    return json.dumps(doc, separators=(",", ":")).encode("utf-8")


def spec_from_json(data: bytes | str) -> ScriptSpec:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise SpecValidationError(f"malformed JSON at byte offset {exc.pos}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise SpecValidationError("script spec must be a JSON object")
    try:
        size = doc["image_size"]
        strokes = [[(float(x), float(y)) for x, y in poly] for poly in doc["strokes"]]
        return ScriptSpec(
            image_size=(int(size[0]), int(size[1])),
            pen_width=float(doc["pen_width"]),
            strokes=strokes,
            noise=float(doc.get("noise", 0.0)),
            background=int(doc.get("background", 230)),
            foreground=int(doc.get("foreground", 25)),
            jitter_sigma=float(doc.get("jitter_sigma", 8.0)),
            seed=int(doc.get("seed", 0)),
        )
    except SpecValidationError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise SpecValidationError(f"bad script spec: {exc!r}") from exc


def _stamp_segment(
    fg: np.ndarray, a: tuple[float, float], b: tuple[float, float], radius: float
) -> None:
    """Mark every pixel center within ``radius`` of segment a-b."""
    h, w = fg.shape
    x0 = max(0, int(math.floor(min(a[0], b[0]) - radius)))
    x1 = min(w - 1, int(math.ceil(max(a[0], b[0]) + radius)))
    y0 = max(0, int(math.floor(min(a[1], b[1]) - radius)))
    y1 = min(h - 1, int(math.ceil(max(a[1], b[1]) + radius)))
    if x0 > x1 or y0 > y1:
        return
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    xs = xs.astype(np.float64)
    ys = ys.astype(np.float64)
    ex = b[0] - a[0]
    ey = b[1] - a[1]
    seg2 = ex * ex + ey * ey
    if seg2 == 0.0:
        ddx = xs - a[0]
        ddy = ys - a[1]
        dist2 = ddx * ddx + ddy * ddy
    else:
        t = ((xs - a[0]) * ex + (ys - a[1]) * ey) / seg2
        t = np.clip(t, 0.0, 1.0)
        cx = a[0] + t * ex
        cy = a[1] + t * ey
        ddx = xs - cx
        ddy = ys - cy
        dist2 = ddx * ddx + ddy * ddy
    fg[y0 : y1 + 1, x0 : x1 + 1] |= dist2 <= radius * radius


def _stamp_spec(spec: ScriptSpec) -> np.ndarray:
    w, h = spec.image_size
    fg = np.zeros((h, w), dtype=bool)
    radius = spec.pen_width / 2.0
    for polyline in spec.strokes:
        if len(polyline) == 1:
            _stamp_segment(fg, polyline[0], polyline[0], radius)
        for a, b in zip(polyline, polyline[1:]):
            _stamp_segment(fg, a, b, radius)
    return fg


def rasterize(spec: ScriptSpec) -> tuple[GrayImage, OnlineTrace]:
    """Render the spec to a gray image and return the exact ground truth.

    Ink is the set of pixel centers within pen_width/2 of any stroke
    segment. Ink and paper intensities get Gaussian jitter (rounded,
    clipped to [0, 255]); salt-and-pepper noise then flips the stated
    fraction of pixels to 0 or 255. Everything is driven by spec.seed.
    """
    w, h = spec.image_size
    fg = _stamp_spec(spec)
    img = np.full((h, w), float(spec.background))
    img[fg] = float(spec.foreground)
    rng = np.random.default_rng(spec.seed)
    if spec.jitter_sigma > 0:
        img += rng.normal(0.0, spec.jitter_sigma, size=(h, w))
    img = np.clip(np.rint(img), 0, 255)
    if spec.noise > 0:
        hits = rng.random((h, w)) < spec.noise
        values = rng.integers(0, 2, size=(h, w)) * 255
        img[hits] = values[hits]
    truth_strokes = [
        Stroke(i, [(x, y, t) for t, (x, y) in enumerate(poly)])
        for i, poly in enumerate(spec.strokes)
    ]
    truth = OnlineTrace(
        source=f"synthetic:seed={spec.seed}",
        image_size=(w, h),
        avg_width=spec.pen_width,
        strokes=truth_strokes,
    )
    return GrayImage(img.astype(np.uint8)), truth


@dataclass(frozen=True)
class CorpusParams:
    """Knobs for the random corpus generator.

    Strokes are smooth random walks with a bounded per-step turn, headed
    into the lower half-plane the way left-to-right top-to-bottom script
    strokes are drawn; crossings between strokes are allowed and exercise
    the tracer's straight-through rule.
    """

    n_items: int = 50
    master_seed: int = 42
    width_range: tuple[int, int] = (192, 512)
    height_range: tuple[int, int] = (96, 256)
    strokes_range: tuple[int, int] = (1, 5)
    pen_range: tuple[int, int] = (2, 6)
    noise_range: tuple[float, float] = (0.0, 0.02)
    arc_length_range: tuple[float, float] = (60.0, 160.0)
    max_turn: float = math.pi / 8


# headings stay in this band so every stroke descends monotonically;
# min/max keep the walk from running flat along a row
_HEADING_LO = math.pi / 6
_HEADING_HI = 5 * math.pi / 6


def _reflect_heading(heading: float) -> float:
    if heading < _HEADING_LO:
        heading = _HEADING_LO + (_HEADING_LO - heading)
    elif heading > _HEADING_HI:
        heading = _HEADING_HI - (heading - _HEADING_HI)
    return min(_HEADING_HI, max(_HEADING_LO, heading))


def _random_stroke(
    rng: np.random.Generator,
    w: int,
    h: int,
    pen: float,
    params: CorpusParams,
    start: tuple[float, float],
) -> Polyline:
    margin = pen / 2.0 + 2.0
    x, y = start
    heading = rng.uniform(_HEADING_LO, _HEADING_HI)
    # cap the arc so strokes do not all pile up against the bottom margin
    room = (h - margin - y) * 1.8
    target = min(rng.uniform(*params.arc_length_range), max(30.0, room))
    step = rng.uniform(4.0, 7.0)
    turn = rng.uniform(0.3, 1.0) * params.max_turn
    points: Polyline = [(x, y)]
    travelled = 0.0
    while travelled < target:
        heading = _reflect_heading(heading + rng.uniform(-turn, turn))
        nx = x + step * math.cos(heading)
        ny = y + step * math.sin(heading)
        if nx < margin or nx > w - margin:
            heading = _reflect_heading(math.pi - heading)
            nx = x + step * math.cos(heading)
            ny = y + step * math.sin(heading)
        if ny > h - margin:
            break
        x, y = nx, ny
        points.append((x, y))
        travelled += step
    return points


def _pick_starts(
    rng: np.random.Generator, n: int, w: int, h: int, pen: float
) -> list[tuple[float, float]]:
    """Stroke start points, kept a few pen widths apart where possible.

    Crossings mid-path are fine and wanted; near-coincident starts braid
    whole strokes together into one unrecoverable blob.
    """
    margin = pen / 2.0 + 2.0
    min_gap = 4.0 * pen
    starts: list[tuple[float, float]] = []
    for _ in range(n):
        for _attempt in range(20):
            x = rng.uniform(margin, w - margin)
            y = rng.uniform(margin, max(margin + 1.0, h * 0.45))
            if all((x - sx) ** 2 + (y - sy) ** 2 >= min_gap**2 for sx, sy in starts):
                break
        starts.append((x, y))
    return starts


def _generate_item(seed_seq: np.random.SeedSequence, params: CorpusParams) -> ScriptSpec:
    rng = np.random.default_rng(seed_seq)
    w = int(rng.integers(params.width_range[0], params.width_range[1] + 1))
    h = int(rng.integers(params.height_range[0], params.height_range[1] + 1))
    pen = float(rng.uniform(params.pen_range[0], params.pen_range[1]))
    # crowding guard: keep total ink proportional to the canvas
    lo, hi = params.strokes_range
    fit = max(lo, min(hi, int(w * h / (90.0 * pen * pen))))
    n_strokes = int(rng.integers(lo, max(lo, min(hi, fit)) + 1))
    starts = _pick_starts(rng, n_strokes, w, h, pen)
    strokes = [_random_stroke(rng, w, h, pen, params, s) for s in starts]
    noise = float(rng.uniform(*params.noise_range))
    seed = int(rng.integers(0, 2**31))
    return ScriptSpec(
        image_size=(w, h),
        pen_width=pen,
        strokes=strokes,
        noise=noise,
        seed=seed,
    )


def corpus(params: CorpusParams) -> list[tuple[GrayImage, OnlineTrace, ScriptSpec]]:
    """Deterministic list of (image, ground truth, spec) triples."""
    if params.n_items < 1:
        raise ValueError("n_items must be >= 1")
    root = np.random.SeedSequence(params.master_seed)
    items = []
    for child in root.spawn(params.n_items):
        spec = _generate_item(child, params)
        img, truth = rasterize(spec)
        items.append((img, truth, spec))
    return items
