"""Axis-aligned box algebra shared by every stage of the tracker."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

__all__ = [
    "BoundingBox",
    "Detection",
    "iou",
    "iou_matrix",
    "uncovered_ratio",
]


@dataclass(frozen=True)
class BoundingBox:
    """Pixel box stored as (left, top, width, height), MOTChallenge order."""

    left: float
    top: float
    width: float
    height: float

    def __post_init__(self):
        vals = (self.left, self.top, self.width, self.height)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box coordinates: {vals}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"box must have positive size, got {self.width}x{self.height}")

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def bottom(self) -> float:
        return self.top + self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.left + self.width / 2.0, self.top + self.height / 2.0)

    @property
    def area(self) -> float:
        # corner arithmetic, so that iou(a, a) is exactly 1 in floating point
        return (self.right - self.left) * (self.bottom - self.top)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.width, self.height)

    @classmethod
    def from_center(cls, cx: float, cy: float, width: float, height: float) -> "BoundingBox":
        return cls(cx - width / 2.0, cy - height / 2.0, width, height)


@dataclass(frozen=True)
class Detection:
    """A detector output in one frame.

    ``payload`` is an opaque value carried alongside the box (for synthetic
    corpora it is the ground-truth identity); it never takes part in equality.
    """

    box: BoundingBox
    score: float
    frame: int
    payload: Any = field(default=None, compare=False)

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"detection score must lie in [0, 1], got {self.score}")
        if self.frame < 1:
            raise ValueError(f"frames are 1-based, got {self.frame}")


def _intersection(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.right, b.right) - max(a.left, b.left)
    ih = min(a.bottom, b.bottom) - max(a.top, b.top)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    inter = _intersection(a, b)
    if inter == 0.0:
        return 0.0
    union = a.area + b.area - inter
    return min(1.0, inter / union)


def iou_matrix(rows: Sequence[BoundingBox], cols: Sequence[BoundingBox]) -> np.ndarray:
    """Pairwise IoU, shape ``(len(rows), len(cols))``."""
    out = np.zeros((len(rows), len(cols)), dtype=float)
    for i, a in enumerate(rows):
        for j, b in enumerate(cols):
            out[i, j] = iou(a, b)
    return out


def _union_area(rects: list[tuple[float, float, float, float]]) -> float:
    # rects as (x0, y0, x1, y1); exact area by coordinate compression
    if not rects:
        return 0.0
    arr = np.asarray(rects, dtype=float)
    xs = np.unique(np.concatenate([arr[:, 0], arr[:, 2]]))
    ys = np.unique(np.concatenate([arr[:, 1], arr[:, 3]]))
    xmid = (xs[:-1] + xs[1:]) / 2.0
    ymid = (ys[:-1] + ys[1:]) / 2.0
    covered = np.zeros((len(xmid), len(ymid)), dtype=bool)
    for x0, y0, x1, y1 in arr:
        cx = (xmid > x0) & (xmid < x1)
        cy = (ymid > y0) & (ymid < y1)
        covered |= np.outer(cx, cy)
    cell = np.outer(np.diff(xs), np.diff(ys))
    return float(cell[covered].sum())


def uncovered_ratio(target: BoundingBox, others: Sequence[BoundingBox]) -> float:
    """Fraction of ``target`` not overlapped by any box in ``others``."""
    clipped = []
    for o in others:
        x0, x1 = max(target.left, o.left), min(target.right, o.right)
        y0, y1 = max(target.top, o.top), min(target.bottom, o.bottom)
        if x1 > x0 and y1 > y0:
            clipped.append((x0, y0, x1, y1))
    if not clipped:
        return 1.0
    covered = _union_area(clipped)
    return float(min(1.0, max(0.0, 1.0 - covered / target.area)))
