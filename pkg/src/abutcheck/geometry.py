"""Integer rectangle primitives and a grid-bucket spatial index.

All coordinates are database units (1/1000 micron by default), so every
comparison here is exact.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Generic, Iterable, Iterator, List, Tuple, TypeVar


@dataclass(frozen=True, order=True)
class Rect:
    x_lo: int
    y_lo: int
    x_hi: int
    y_hi: int

    def __post_init__(self):
        if self.x_lo > self.x_hi or self.y_lo > self.y_hi:
            raise ValueError(f"degenerate rect {tuple(self)}")

    def __iter__(self):
        return iter((self.x_lo, self.y_lo, self.x_hi, self.y_hi))

    @property
    def width(self) -> int:
        return self.x_hi - self.x_lo

    @property
    def height(self) -> int:
        return self.y_hi - self.y_lo

    @property
    def min_dim(self) -> int:
        return min(self.width, self.height)

    def translate(self, dx: int, dy: int) -> "Rect":
        return Rect(self.x_lo + dx, self.y_lo + dy, self.x_hi + dx, self.y_hi + dy)

    def bloat(self, d: int) -> "Rect":
        return Rect(self.x_lo - d, self.y_lo - d, self.x_hi + d, self.y_hi + d)

    def intersects(self, other: "Rect") -> bool:
        """Closed-interval test: touching edges count."""
        return (self.x_lo <= other.x_hi and other.x_lo <= self.x_hi
                and self.y_lo <= other.y_hi and other.y_lo <= self.y_hi)

    def overlaps(self, other: "Rect") -> bool:
        """Open test: positive-area overlap only."""
        return (self.x_lo < other.x_hi and other.x_lo < self.x_hi
                and self.y_lo < other.y_hi and other.y_lo < self.y_hi)

    def contains(self, other: "Rect") -> bool:
        return (self.x_lo <= other.x_lo and other.x_hi <= self.x_hi
                and self.y_lo <= other.y_lo and other.y_hi <= self.y_hi)

    def contains_point(self, x: int, y: int) -> bool:
        return self.x_lo <= x <= self.x_hi and self.y_lo <= y <= self.y_hi

    def union(self, other: "Rect") -> "Rect":
        return Rect(min(self.x_lo, other.x_lo), min(self.y_lo, other.y_lo),
                    max(self.x_hi, other.x_hi), max(self.y_hi, other.y_hi))

    def clip(self, other: "Rect") -> "Rect":
        """Intersection with `other`; collapses to the nearest edge when disjoint."""
        x_lo = min(max(self.x_lo, other.x_lo), other.x_hi)
        y_lo = min(max(self.y_lo, other.y_lo), other.y_hi)
        x_hi = max(min(self.x_hi, other.x_hi), x_lo)
        y_hi = max(min(self.y_hi, other.y_hi), y_lo)
        return Rect(x_lo, y_lo, x_hi, y_hi)


def bbox_of(rects: Iterable[Rect]) -> Rect:
    it = iter(rects)
    try:
        out = next(it)
    except StopIteration:
        raise ValueError("bbox of empty sequence") from None
    for r in it:
        out = out.union(r)
    return out


def _gap(a_lo: int, a_hi: int, b_lo: int, b_hi: int) -> int:
    if a_hi < b_lo:
        return b_lo - a_hi
    if b_hi < a_lo:
        return a_lo - b_hi
    return 0


def distance(a: Rect, b: Rect) -> float:
    """Euclidean edge-to-edge distance; 0 when the rects touch or overlap."""
    dx = _gap(a.x_lo, a.x_hi, b.x_lo, b.x_hi)
    dy = _gap(a.y_lo, a.y_hi, b.y_lo, b.y_hi)
    if dx == 0:
        return float(dy)
    if dy == 0:
        return float(dx)
    return math.hypot(dx, dy)


def closer_than(a: Rect, b: Rect, limit: int) -> bool:
    """True when distance(a, b) < limit, in exact integer arithmetic."""
    dx = _gap(a.x_lo, a.x_hi, b.x_lo, b.x_hi)
    dy = _gap(a.y_lo, a.y_hi, b.y_lo, b.y_hi)
    return dx * dx + dy * dy < limit * limit


def gap_region(a: Rect, b: Rect) -> Rect:
    """Region between two rects (their overlap when they intersect).

    Symmetric in its arguments, which keeps violation locations stable.
    """
    def span(a_lo, a_hi, b_lo, b_hi):
        if a_hi < b_lo:
            return a_hi, b_lo
        if b_hi < a_lo:
            return b_hi, a_lo
        return max(a_lo, b_lo), min(a_hi, b_hi)

    x_lo, x_hi = span(a.x_lo, a.x_hi, b.x_lo, b.x_hi)
    y_lo, y_hi = span(a.y_lo, a.y_hi, b.y_lo, b.y_hi)
    return Rect(x_lo, y_lo, x_hi, y_hi)


T = TypeVar("T")


class SpatialIndex(Generic[T]):
    """Uniform grid-bucket index over rectangles.

    Each rect is registered in every bucket its bbox covers; a query walks
    the buckets of the (bloated) query rect and de-duplicates by item id.
    """

    def __init__(self, bucket: int = 1000):
        if bucket <= 0:
            raise ValueError("bucket size must be positive")
        self.bucket = bucket
        self._items: List[Tuple[Rect, T]] = []
        self._grid: Dict[Tuple[int, int], List[int]] = defaultdict(list)

    def __len__(self):
        return len(self._items)

    def _cells(self, r: Rect) -> Iterator[Tuple[int, int]]:
        b = self.bucket
        for gx in range(r.x_lo // b, r.x_hi // b + 1):
            for gy in range(r.y_lo // b, r.y_hi // b + 1):
                yield gx, gy

    def insert(self, rect: Rect, item: T) -> int:
        idx = len(self._items)
        self._items.append((rect, item))
        for cell in self._cells(rect):
            self._grid[cell].append(idx)
        return idx

    def query(self, rect: Rect, within: int = 0) -> List[int]:
        """Ids of items whose rect lies closer than `within` to `rect`
        (or touches it when `within` is 0), in insertion order."""
        probe = rect.bloat(within)
        seen = set()
        for cell in self._cells(probe):
            seen.update(self._grid.get(cell, ()))
        out = []
        for idx in sorted(seen):
            other = self._items[idx][0]
            if within == 0:
                if other.intersects(rect):
                    out.append(idx)
            elif closer_than(rect, other, within):
                out.append(idx)
        return out

    def item(self, idx: int) -> Tuple[Rect, T]:
        return self._items[idx]

    def candidate_pairs(self, within: int) -> Iterator[Tuple[int, int]]:
        """Every id pair (i < j) whose rects are closer than `within`
        (or touching when `within` is 0)."""
        for i, (rect, _) in enumerate(self._items):
            for j in self.query(rect, within):
                if j > i:
                    yield i, j
