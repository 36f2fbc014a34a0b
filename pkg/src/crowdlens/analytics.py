"""Heat grid, centroid tracking, line-crossing footfall, occupancy and tallies."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyGrid, MissingHistory, ModelFormatError
from .imgcore import PixelBuffer

__all__ = [
    "HeatGrid",
    "CountingLine",
    "Track",
    "Tracker",
    "FootfallCounter",
    "GenderTally",
    "grid_update",
    "grid_percentages",
    "render_heat",
    "overlay_heat",
    "tracker_step",
    "crossing_check",
    "count_crossings",
    "occupancy",
    "side_of",
    "default_gate",
]


# ------------------------------------------------------------------ heat

class HeatGrid:
    """``n x n`` visit counts over a ``frame_w x frame_h`` frame.

    ``counts[row, col]``; a detection lands in the cell holding its rect centre.
    """

    def __init__(self, n: int, frame_w: int, frame_h: int):
        if n < 1 or frame_w < 1 or frame_h < 1:
            raise ValueError("grid side and frame dims must be >= 1")
        self.n = n
        self.frame_w = frame_w
        self.frame_h = frame_h
        self.counts = np.zeros((n, n), dtype=np.uint64)

    def cell_of(self, cx: float, cy: float) -> tuple[int, int]:
        """``(col, row)`` for a frame point, clamped into the grid."""
        col = min(max(math.floor(cx * self.n / self.frame_w), 0), self.n - 1)
        row = min(max(math.floor(cy * self.n / self.frame_h), 0), self.n - 1)
        return col, row

    def update(self, dets) -> "HeatGrid":
        for d in dets:
            rect = getattr(d, "rect", d)
            col, row = self.cell_of(*rect.center)
            self.counts[row, col] += np.uint64(1)
        return self

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def percentages(self) -> np.ndarray:
        total = self.total
        if total == 0:
            raise EmptyGrid("no detections recorded")
        return self.counts.astype(np.float64) * 100.0 / total

    def snapshot(self) -> "HeatGrid":
        g = HeatGrid(self.n, self.frame_w, self.frame_h)
        g.counts = self.counts.copy()
        return g

    # text form: "GRID n frame_w frame_h" then n rows of counts
    def save(self, path) -> None:
        rows = [" ".join(str(int(v)) for v in row) for row in self.counts]
        Path(path).write_text(f"GRID {self.n} {self.frame_w} {self.frame_h}\n" + "\n".join(rows) + "\n")

    @classmethod
    def load(cls, path) -> "HeatGrid":
        lines = Path(path).read_text().split("\n")
        head = lines[0].split()
        if len(head) != 4 or head[0] != "GRID":
            raise ModelFormatError(f"{path}: not a GRID file")
        g = cls(int(head[1]), int(head[2]), int(head[3]))
        try:
            g.counts = np.array([[int(v) for v in lines[1 + r].split()] for r in range(g.n)],
                                dtype=np.uint64).reshape(g.n, g.n)
        except (IndexError, ValueError) as exc:
            raise ModelFormatError(f"{path}: malformed grid rows ({exc})") from exc
        return g


def grid_update(g: HeatGrid, dets) -> HeatGrid:
    return g.update(dets)


def grid_percentages(g: HeatGrid) -> np.ndarray:
    return g.percentages()


def render_heat(g: HeatGrid) -> PixelBuffer:
    """Blue-to-red block image, one block per cell, red scaled by count / max."""
    bw = max(g.frame_w // g.n, 1)
    bh = max(g.frame_h // g.n, 1)
    peak = float(g.counts.max())
    t = g.counts.astype(np.float64) / peak if peak > 0 else np.zeros((g.n, g.n))
    red = np.floor(255.0 * t + 0.5)
    blue = 255.0 - red
    rgb = np.stack([red, np.zeros_like(red), blue], axis=-1).astype(np.uint8)
    return PixelBuffer(np.repeat(np.repeat(rgb, bh, axis=0), bw, axis=1))


def overlay_heat(frame, g: HeatGrid, alpha: float = 0.6) -> PixelBuffer:
    """Tint a frame towards red per cell by ``alpha * count / max``.

    Pixels map to cells the same way detection centres do, so empty cells
    keep their original colour.
    """
    px = frame.data if isinstance(frame, PixelBuffer) else np.asarray(getattr(frame, "pixels", frame))
    if px.ndim == 2:
        px = px[:, :, None]
    h, w = px.shape[:2]
    if (w, h) != (g.frame_w, g.frame_h):
        raise ValueError(f"frame is {w}x{h}, grid covers {g.frame_w}x{g.frame_h}")
    rgb = np.broadcast_to(px, (h, w, 3)).astype(np.float64)
    peak = float(g.counts.max())
    if peak == 0:
        return PixelBuffer(rgb.astype(np.uint8))
    rows = np.minimum(np.arange(h) * g.n // h, g.n - 1)
    cols = np.minimum(np.arange(w) * g.n // w, g.n - 1)
    t = alpha * (g.counts.astype(np.float64) / peak)[rows[:, None], cols[None, :]]
    out = rgb * (1.0 - t[:, :, None]) + np.array([255.0, 0.0, 0.0]) * t[:, :, None]
    return PixelBuffer(np.floor(out + 0.5).astype(np.uint8))


# -------------------------------------------------------------- tracking

@dataclass
class Track:
    id: int
    centroid: tuple[float, float]
    prev_centroid: tuple[float, float] | None = None
    age: int = 1
    missed: int = 0
    sides: dict = field(default_factory=dict)  # line label -> last nonzero side


def default_gate(frame_w: int, frame_h: int) -> float:
    return 0.1 * math.hypot(frame_w, frame_h)


def tracker_step(tracks: list[Track], centroids, gate: float, max_missed: int = 5,
                 next_id: int = 0) -> tuple[list[Track], list[tuple[int, int]], int]:
    """Greedy globally-nearest association of detections to live tracks.

    Pairs are taken in order of increasing distance (ties by track, then
    detection order) while both ends are free and the distance is within
    ``gate``. Returns ``(tracks, [(track_id, detection_index)], next_id)``.
    """
    if gate <= 0:
        raise ValueError("gate must be positive")
    centroids = [tuple(map(float, c)) for c in centroids]
    pairs = []
    for ti, t in enumerate(tracks):
        for di, c in enumerate(centroids):
            d = math.hypot(c[0] - t.centroid[0], c[1] - t.centroid[1])
            if d <= gate:
                pairs.append((d, ti, di))
    pairs.sort()
    used_t, used_d = set(), set()
    assignments = []
    for _, ti, di in pairs:
        if ti in used_t or di in used_d:
            continue
        used_t.add(ti)
        used_d.add(di)
        t = tracks[ti]
        t.prev_centroid = t.centroid
        t.centroid = centroids[di]
        t.age += 1
        t.missed = 0
        assignments.append((t.id, di))

    alive = []
    for ti, t in enumerate(tracks):
        if ti not in used_t:
            t.missed += 1
            t.prev_centroid = None
            if t.missed > max_missed:
                continue
        alive.append(t)
    for di, c in enumerate(centroids):
        if di not in used_d:
            alive.append(Track(next_id, c))
            assignments.append((next_id, di))
            next_id += 1
    assignments.sort(key=lambda a: a[1])
    return alive, assignments, next_id


class Tracker:
    """Stateful wrapper over :func:`tracker_step` that owns id assignment."""

    def __init__(self, gate: float, max_missed: int = 5):
        self.gate = gate
        self.max_missed = max_missed
        self.tracks: list[Track] = []
        self._next_id = 0

    def step(self, centroids) -> list[tuple[int, int]]:
        self.tracks, assignments, self._next_id = tracker_step(
            self.tracks, centroids, self.gate, self.max_missed, self._next_id)
        return assignments

    def get(self, track_id: int) -> Track:
        return next(t for t in self.tracks if t.id == track_id)


# ------------------------------------------------------------- crossing

@dataclass(frozen=True)
class CountingLine:
    p1: tuple[float, float]
    p2: tuple[float, float]
    label: str = "line"

    def __post_init__(self):
        if tuple(self.p1) == tuple(self.p2):
            raise ValueError("counting line endpoints must differ")


def _cross(ax, ay, bx, by) -> float:
    return ax * by - ay * bx


def side_of(line: CountingLine, p) -> int:
    """+1 / -1 / 0 for the side of ``p``; ``(p - p1) x (p2 - p1)``."""
    (x1, y1), (x2, y2) = line.p1, line.p2
    v = _cross(p[0] - x1, p[1] - y1, x2 - x1, y2 - y1)
    return (v > 0) - (v < 0)


def _segment_hits_line(line: CountingLine, a, b) -> bool:
    """Whether the motion segment a->b meets the finite line segment."""
    dx, dy = b[0] - a[0], b[1] - a[1]
    d1 = _cross(dx, dy, line.p1[0] - a[0], line.p1[1] - a[1])
    d2 = _cross(dx, dy, line.p2[0] - a[0], line.p2[1] - a[1])
    return d1 * d2 <= 0


def crossing_check(t: Track, line: CountingLine) -> str | None:
    """``"in"`` for a negative-to-positive side flip across the segment,
    ``"out"`` for the reverse, otherwise ``None``.

    A point exactly on the line keeps the track's previous nonzero side, so
    touching the line and stepping back never counts.
    """
    if t.prev_centroid is None:
        raise MissingHistory(f"track {t.id} has no previous centroid")
    prev_side = side_of(line, t.prev_centroid) or t.sides.get(line.label, 0)
    curr_side = side_of(line, t.centroid)
    if curr_side:
        t.sides[line.label] = curr_side
    elif prev_side:
        t.sides[line.label] = prev_side
    if prev_side * curr_side >= 0:
        return None
    if not _segment_hits_line(line, t.prev_centroid, t.centroid):
        return None
    return "in" if curr_side > 0 else "out"


def count_crossings(tracker: Tracker, lines, centroids) -> list[tuple[int, str, str]]:
    """Advance ``tracker`` by one frame of centroids and test every line.

    New tracks only record their starting side. Returns
    ``(track_id, line_label, direction)`` per crossing, in detection order.
    """
    out = []
    for track_id, _ in tracker.step(centroids):
        track = tracker.get(track_id)
        if track.prev_centroid is None:
            for ln in lines:
                track.sides.setdefault(ln.label, side_of(ln, track.centroid) or 0)
            continue
        for ln in lines:
            direction = crossing_check(track, ln)
            if direction is not None:
                out.append((track_id, ln.label, direction))
    return out


@dataclass
class FootfallCounter:
    line: CountingLine
    in_count: int = 0
    out_count: int = 0

    def record(self, direction: str | None) -> None:
        if direction == "in":
            self.in_count += 1
        elif direction == "out":
            self.out_count += 1


def occupancy(fc: FootfallCounter) -> tuple[int, int]:
    raw = fc.in_count - fc.out_count
    return raw, max(raw, 0)


class GenderTally(Counter):
    """Per-label counts; only ever incremented."""

    def record(self, label: str) -> None:
        self[label] += 1

    def split(self) -> dict[str, float]:
        total = sum(self.values())
        return {k: v / total for k, v in sorted(self.items())} if total else {}
