"""Road-following traversal that turns an ink mask into ordered strokes.

The tracer drives a virtual two-wheeled vehicle over the foreground
("the road"). Each wheel senses the number of ink pixels under a small
disk; steering is proportional to the wheel imbalance, which keeps the
vehicle centered on the road, and the per-tick heading clamp makes it
run straight through crossings instead of turning onto the other path.
A stroke ends when both wheels lose the road and no unvisited ink lies
in a lookahead corridor ahead; pixels swept by the vehicle are consumed
so each pen-down segment is emitted exactly once.

Coordinates are sub-pixel: x grows rightward, y grows downward, and the
heading is in radians with 0 = +x, increasing toward +y.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.ndimage

from .raster import BinaryImage
from .trace_model import OnlineTrace, Stroke
from .width import WidthEstimate

__all__ = [
    "TruckGeometry",
    "TruckState",
    "TraversalMask",
    "STEER_GAIN",
    "STEER_DAMPING",
    "HEADING_CLAMP",
    "RESIDUE_VISITED_FRACTION",
    "derive_geometry",
    "find_start",
    "initial_heading",
    "wheel_balance",
    "steer_step",
    "trace_stroke",
    "trace_all",
]

STEER_GAIN = 0.35
STEER_DAMPING = 0.7
HEADING_CLAMP = math.pi / 6
RESIDUE_VISITED_FRACTION = 0.8
RUNAWAY_TICK_FACTOR = 20
PROBE_DIRECTIONS = 16

_TAU = 2.0 * math.pi


@dataclass(frozen=True)
class TruckGeometry:
    """Vehicle dimensions, all in pixels."""

    track_width: float  # perpendicular wheel separation
    wheel_radius: float  # sensing disk radius per wheel
    step: float  # advance per tick
    lookahead: float  # dead-end probe distance

    def __post_init__(self):
        if self.track_width < 1:
            raise ValueError("track_width must be >= 1")
        if self.wheel_radius < 0.5:
            raise ValueError("wheel_radius must be >= 0.5")
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.lookahead < self.step:
            raise ValueError("lookahead must be >= step")


@dataclass
class TruckState:
    position: tuple[float, float]
    heading: float  # radians in [0, 2*pi)
    ticks: int = 0
    last_imbalance: float = 0.0  # controller memory for the damping term


@dataclass
class TraversalMask:
    """Foreground pixels already consumed by an emitted stroke."""

    visited: np.ndarray  # bool, same shape as the image

    @classmethod
    def for_image(cls, img: BinaryImage) -> "TraversalMask":
        return cls(np.zeros_like(img.mask, dtype=bool))


def derive_geometry(
    width: WidthEstimate | float,
    truck_scale: float = 1.0,
    wheel_frac: float = 0.25,
    step_frac: float = 0.5,
    lookahead_frac: float = 2.0,
) -> TruckGeometry:
    """Size the vehicle from the average stroke width.

    Defaults put the wheels near the two road edges (track equal to the
    stroke width, sensing disks a quarter of it), advance half a track
    per tick, and probe two tracks ahead before declaring a dead end.
    """
    if truck_scale <= 0:
        raise ValueError("truck_scale must be positive")
    avg = float(getattr(width, "avg_width", width))
    if avg < 1:
        raise ValueError("average width must be >= 1")
    track = max(1.0, truck_scale * avg)
    return TruckGeometry(
        track_width=track,
        wheel_radius=max(0.5, wheel_frac * track),
        step=max(0.5, step_frac * track),
        lookahead=lookahead_frac * track,
    )


def _normalize(heading: float) -> float:
    return heading % _TAU


def _circular_dist(a: float, b: float) -> float:
    d = abs(a - b) % _TAU
    return min(d, _TAU - d)


def _signed_angle(to: float, frm: float) -> float:
    """Signed rotation taking ``frm`` onto ``to``, in (-pi, pi]."""
    d = (to - frm) % _TAU
    return d - _TAU if d > math.pi else d


def find_start(img: BinaryImage, mask: TraversalMask) -> tuple[int, int] | None:
    """First unvisited ink pixel scanning rows top to bottom, left to right."""
    open_pixels = img.mask & ~mask.visited
    flat = open_pixels.ravel()
    idx = int(flat.argmax())
    if not flat[idx]:
        return None
    y, x = divmod(idx, img.width)
    return (x, y)


def _corridor_count(
    img: BinaryImage,
    mask: TraversalMask | None,
    origin: tuple[float, float],
    heading: float,
    length: float,
    half_width: float,
) -> int:
    """Ink pixels whose centers lie in a corridor ahead of ``origin``.

    The corridor runs from the origin along ``heading`` for ``length``
    pixels and extends ``half_width`` to each side. With ``mask`` given,
    only unvisited pixels are counted.
    """
    ox, oy = origin
    ux, uy = math.cos(heading), math.sin(heading)
    reach = length + half_width
    x0 = max(0, int(math.floor(ox - reach)))
    x1 = min(img.width - 1, int(math.ceil(ox + reach)))
    y0 = max(0, int(math.floor(oy - reach)))
    y1 = min(img.height - 1, int(math.ceil(oy + reach)))
    if x0 > x1 or y0 > y1:
        return 0
    window = img.mask[y0 : y1 + 1, x0 : x1 + 1]
    if mask is not None:
        window = window & ~mask.visited[y0 : y1 + 1, x0 : x1 + 1]
    if not window.any():
        return 0
    ys, xs = np.nonzero(window)
    dx = (xs + x0) - ox
    dy = (ys + y0) - oy
    along = dx * ux + dy * uy
    cross = dx * uy - dy * ux
    inside = (along >= 0.0) & (along <= length) & (np.abs(cross) <= half_width)
    return int(np.count_nonzero(inside))


def initial_heading(
    img: BinaryImage,
    mask: TraversalMask,
    start: tuple[float, float],
    geom: TruckGeometry,
) -> float:
    """Probe evenly spaced directions and take the one with the most road.

    Ties prefer the direction closest to rightward, then to downward,
    matching the way left-to-right top-to-bottom scripts are written.
    """
    origin = (float(start[0]), float(start[1]))
    directions = [k * _TAU / PROBE_DIRECTIONS for k in range(PROBE_DIRECTIONS)]
    counts = [
        _corridor_count(img, mask, origin, d, geom.lookahead, geom.wheel_radius)
        for d in directions
    ]
    best = max(counts)
    contenders = [d for d, c in zip(directions, counts) if c == best]
    return min(
        contenders,
        key=lambda d: (_circular_dist(d, 0.0), _circular_dist(d, math.pi / 2)),
    )


def _disk_count(grid: np.ndarray, cx: float, cy: float, radius: float) -> int:
    h, w = grid.shape
    x0 = max(0, int(math.floor(cx - radius)))
    x1 = min(w - 1, int(math.ceil(cx + radius)))
    y0 = max(0, int(math.floor(cy - radius)))
    y1 = min(h - 1, int(math.ceil(cy + radius)))
    if x0 > x1 or y0 > y1:
        return 0
    window = grid[y0 : y1 + 1, x0 : x1 + 1]
    if not window.any():
        return 0
    ys, xs = np.nonzero(window)
    dx = (xs + x0) - cx
    dy = (ys + y0) - cy
    return int(np.count_nonzero(dx * dx + dy * dy <= radius * radius))


def wheel_balance(
    img: BinaryImage, state: TruckState, geom: TruckGeometry
) -> tuple[int, int]:
    """Ink pixels under the left and right sensing wheels.

    Wheels sit half a track to each side of the vehicle, perpendicular to
    the heading. Sensing counts all foreground, visited or not, so an
    already-consumed crossing still reads as road.
    """
    x, y = state.position
    sin_h, cos_h = math.sin(state.heading), math.cos(state.heading)
    half = geom.track_width / 2.0
    left = _disk_count(img.mask, x + half * sin_h, y - half * cos_h, geom.wheel_radius)
    right = _disk_count(img.mask, x - half * sin_h, y + half * cos_h, geom.wheel_radius)
    return left, right


def _consume(
    img: BinaryImage,
    mask: TraversalMask,
    center: tuple[float, float],
    radius: float,
    swath: np.ndarray | None = None,
) -> None:
    cx, cy = center
    x0 = max(0, int(math.floor(cx - radius)))
    x1 = min(img.width - 1, int(math.ceil(cx + radius)))
    y0 = max(0, int(math.floor(cy - radius)))
    y1 = min(img.height - 1, int(math.ceil(cy + radius)))
    if x0 > x1 or y0 > y1:
        return
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    dx = xs - cx
    dy = ys - cy
    road = (dx * dx + dy * dy <= radius * radius) & img.mask[y0 : y1 + 1, x0 : x1 + 1]
    mask.visited[y0 : y1 + 1, x0 : x1 + 1] |= road
    if swath is not None:
        swath[y0 : y1 + 1, x0 : x1 + 1] |= road


def _in_expanded_bounds(img: BinaryImage, x: float, y: float, margin: float) -> bool:
    return -margin <= x <= img.width - 1 + margin and -margin <= y <= img.height - 1 + margin


# fan used when the road bends away faster than the wheels can follow:
# probe directions within +-5pi/8 of the current heading (a 90-degree bend
# can leave the road behind the vehicle's shoulder, but never dead astern)
_RECOVERY_OFFSETS = [k * _TAU / PROBE_DIRECTIONS for k in range(-5, 6)]


def _recovery_heading(
    img: BinaryImage,
    mask: TraversalMask,
    state: TruckState,
    geom: TruckGeometry,
) -> float | None:
    """Direction of nearby unvisited road when the straight probe fails.

    Covers sharp corners: mid-turn the vehicle can slide off the bend
    with the road still beside it. A bend presents a full road-width
    swath of unvisited ink, so directions are accepted only above a
    road-mass floor; the few-pixel consumption slivers left along an
    already-traced stroke stay below it, and the vehicle does not U-turn
    to chase them.
    """
    min_road = max(2.0, 0.5 * geom.track_width * geom.track_width)
    best_count = 0
    best_dir = None
    for offset in _RECOVERY_OFFSETS:
        d = _normalize(state.heading + offset)
        count = _corridor_count(
            img, mask, state.position, d, geom.lookahead, geom.track_width / 2.0
        )
        if count > best_count or (
            count == best_count
            and best_dir is not None
            and count > 0
            and _circular_dist(d, state.heading) < _circular_dist(best_dir, state.heading)
        ):
            best_count = count
            best_dir = d
    return best_dir if best_count >= min_road else None


def steer_step(
    img: BinaryImage,
    mask: TraversalMask,
    state: TruckState,
    geom: TruckGeometry,
    gain: float = STEER_GAIN,
    damping: float = STEER_DAMPING,
    clamp: float = HEADING_CLAMP,
    swath: np.ndarray | None = None,
) -> TruckState | None:
    """Advance one tick; None signals the end of the stroke.

    On road, the heading correction is gain * (R - L) / (R + L) plus a
    damping term on the imbalance change, the whole capped at +-clamp
    per tick. Excess ink under one wheel turns the vehicle toward that
    wheel, re-centering it; the damping stops the correction from
    overshooting into a weave, and the cap keeps the vehicle running
    straight through crossings instead of turning onto the other path.

    Off road, the vehicle coasts straight while unvisited ink remains in
    the lookahead corridor (bridging small binarization gaps without a
    pen lift), then turns toward nearby unvisited road if the path bent
    away faster than it could steer. Only when all of that fails is the
    stroke over.

    Ink within half a track of the new position is consumed.
    """
    left, right = wheel_balance(img, state, geom)
    imbalance = state.last_imbalance
    if left + right > 0:
        imbalance = (right - left) / (right + left)
        correction = gain * imbalance + damping * (imbalance - state.last_imbalance)
        correction = max(-clamp, min(clamp, correction))
        heading = _normalize(state.heading + correction)
    else:
        ahead = _corridor_count(
            img, mask, state.position, state.heading, geom.lookahead, geom.track_width / 2.0
        )
        if ahead > 0:
            heading = state.heading
        else:
            target = _recovery_heading(img, mask, state, geom)
            if target is None:
                return None
            turn = _signed_angle(target, state.heading)
            turn = max(-clamp, min(clamp, turn))
            heading = _normalize(state.heading + turn)
    nx = state.position[0] + geom.step * math.cos(heading)
    ny = state.position[1] + geom.step * math.sin(heading)
    if not _in_expanded_bounds(img, nx, ny, geom.track_width):
        return None
    new_state = TruckState((nx, ny), heading, state.ticks + 1, imbalance)
    _consume(img, mask, (nx, ny), geom.track_width / 2.0, swath)
    return new_state


def _max_ticks(img: BinaryImage, geom: TruckGeometry) -> int:
    return int(RUNAWAY_TICK_FACTOR * img.foreground_count / geom.step) + 1


def _recenter(
    img: BinaryImage,
    start: tuple[float, float],
    heading: float,
    geom: TruckGeometry,
) -> tuple[float, float]:
    """Slide perpendicular to the heading until the wheels balance.

    The row-major seed pixel sits on the road's top edge, not its middle;
    starting the vehicle there leaves a settle transient whose far-edge
    leftovers get rediscovered as spurious strokes. Candidates within half
    a track each side are scored by wheel balance, then total road under
    the wheels, then smallest shift.
    """
    nx, ny = math.sin(heading), -math.cos(heading)
    offsets = np.linspace(-geom.track_width / 2.0, geom.track_width / 2.0, 9)
    offsets = sorted(offsets, key=abs)
    best = (float(start[0]), float(start[1]))
    best_key = None
    for delta in offsets:
        pos = (start[0] + delta * nx, start[1] + delta * ny)
        left, right = wheel_balance(img, TruckState(pos, heading), geom)
        key = (abs(left - right), -(left + right), abs(delta))
        if best_key is None or key < best_key:
            best_key = key
            best = pos
    return best


def trace_stroke(
    img: BinaryImage,
    mask: TraversalMask,
    start: tuple[int, int],
    geom: TruckGeometry,
    stroke_id: int = 0,
    gain: float = STEER_GAIN,
    damping: float = STEER_DAMPING,
    clamp: float = HEADING_CLAMP,
    max_ticks: int | None = None,
    on_tick=None,
    swath: np.ndarray | None = None,
) -> Stroke:
    """Drive from ``start`` until the stroke ends or the tick budget runs out.

    The vehicle is oriented by the corridor probe, recentered onto the
    road, and re-oriented from there before moving. The tick budget
    guards against pathological cycles (closed loops re-sensed after
    consumption); normal strokes end at a dead end long before it.
    ``swath``, when given, accumulates every road pixel under the vehicle
    whether or not it was already visited.
    """
    if max_ticks is None:
        max_ticks = _max_ticks(img, geom)
    seed = (float(start[0]), float(start[1]))
    heading = initial_heading(img, mask, seed, geom)
    position = _recenter(img, seed, heading, geom)
    heading = initial_heading(img, mask, position, geom)
    state = TruckState(position, heading, 0)
    _consume(img, mask, position, geom.track_width / 2.0, swath)
    points = [(position[0], position[1], 0)]
    while state.ticks < max_ticks:
        nxt = steer_step(
            img, mask, state, geom, gain=gain, damping=damping, clamp=clamp, swath=swath
        )
        if nxt is None:
            break
        state = nxt
        points.append((state.position[0], state.position[1], state.ticks))
        if on_tick is not None:
            on_tick()
    return Stroke(stroke_id, points)


def trace_all(
    img: BinaryImage,
    geom: TruckGeometry,
    source: str = "",
    avg_width: float | None = None,
    gain: float = STEER_GAIN,
    damping: float = STEER_DAMPING,
    clamp: float = HEADING_CLAMP,
    residue_threshold: float = RESIDUE_VISITED_FRACTION,
    min_fresh_ratio: float = 0.25,
    snapshot_every: int | None = None,
    on_snapshot=None,
) -> OnlineTrace:
    """Emit strokes until every ink pixel is visited or suppressed.

    Strokes are seeded in row-major discovery order, which is NOT the
    order they were written in; no ordering recovery is attempted. Two
    suppression rules keep consumption slivers at stroke margins from
    becoming spurious strokes: a seed whose connected component is
    already ``residue_threshold`` visited is swallowed instead of traced,
    and a traced stroke whose swath was mostly already-visited road
    (fresh ink below ``min_fresh_ratio`` of the road it drove over) is
    discarded as a re-ride of an earlier stroke.

    ``on_snapshot(tick, visited_copy)`` is invoked every ``snapshot_every``
    ticks for stage-by-stage debug dumps.
    """
    mask = TraversalMask.for_image(img)
    labels, _ = scipy.ndimage.label(img.mask, structure=np.ones((3, 3), dtype=int))
    component_sizes = np.bincount(labels.ravel())
    strokes: list[Stroke] = []
    max_ticks = _max_ticks(img, geom)
    total_ticks = 0

    def bump_tick():
        nonlocal total_ticks
        total_ticks += 1
        if snapshot_every and on_snapshot and total_ticks % snapshot_every == 0:
            on_snapshot(total_ticks, mask.visited.copy())

    while True:
        start = find_start(img, mask)
        if start is None:
            break
        component = labels == labels[start[1], start[0]]
        visited_in_component = int(np.count_nonzero(mask.visited & component))
        size = int(component_sizes[labels[start[1], start[0]]])
        if visited_in_component >= residue_threshold * size:
            mask.visited |= component
            continue
        before = mask.visited.copy()
        swath = np.zeros_like(mask.visited)
        stroke = trace_stroke(
            img,
            mask,
            start,
            geom,
            stroke_id=len(strokes),
            gain=gain,
            damping=damping,
            clamp=clamp,
            max_ticks=max_ticks,
            on_tick=bump_tick,
            swath=swath,
        )
        # progress guard: a seed the vehicle could not even consume would
        # otherwise be rediscovered forever
        mask.visited[start[1], start[0]] = True
        fresh = int(np.count_nonzero(swath & ~before))
        road_under = int(np.count_nonzero(swath))
        if road_under > 0 and fresh < min_fresh_ratio * road_under:
            continue
        strokes.append(stroke)
    width = geom.track_width if avg_width is None else float(avg_width)
    return OnlineTrace(source, (img.width, img.height), width, strokes)
