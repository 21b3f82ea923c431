"""Visual similarity between a track's template and the detections near it.

A provider turns (template, search region, frame context) into a heatmap on
a ``grid x grid`` lattice covering the search region. A detection's visual
similarity to the track is the heatmap value at the cell holding the
detection center, and 0 when that center falls outside the region.

Heatmaps are plain ``numpy`` arrays indexed ``[row, col] = [y, x]``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Mapping, Optional, Protocol, Sequence

import numpy as np

from .exceptions import ContractViolation
from .geometry import BoundingBox, Detection, iou, uncovered_ratio

__all__ = [
    "SearchRegion",
    "Template",
    "FrameContext",
    "ImageSource",
    "VisualSimilarityProvider",
    "NullProvider",
    "OracleProvider",
    "HistogramProvider",
    "make_search_region",
    "similarity_vector",
    "gaussian_target",
    "adaptive_sigma",
    "focal_loss",
    "focal_loss_gradient",
    "should_update_template",
]

FOCAL_EPS = 1e-7


@dataclass(frozen=True)
class SearchRegion:
    frame: int
    center: tuple[float, float]
    side: float
    grid: int = 56

    def __post_init__(self):
        if not self.side > 0:
            raise ContractViolation(f"search region side must be positive, got {self.side}")
        if self.grid < 2:
            raise ContractViolation(f"grid must be >= 2, got {self.grid}")

    @property
    def scale(self) -> float:
        """Grid cells per pixel."""
        return self.grid / self.side

    def to_grid(self, x: float, y: float) -> tuple[float, float]:
        x0 = self.center[0] - self.side / 2.0
        y0 = self.center[1] - self.side / 2.0
        return ((x - x0) * self.scale, (y - y0) * self.scale)

    def to_pixel(self, gx: float, gy: float) -> tuple[float, float]:
        x0 = self.center[0] - self.side / 2.0
        y0 = self.center[1] - self.side / 2.0
        return (x0 + gx / self.scale, y0 + gy / self.scale)

    def cell_of(self, x: float, y: float) -> Optional[tuple[int, int]]:
        """(row, col) of the cell holding pixel (x, y), or None outside."""
        gx, gy = self.to_grid(x, y)
        col, row = math.floor(gx), math.floor(gy)
        if 0 <= row < self.grid and 0 <= col < self.grid:
            return row, col
        return None


@dataclass
class Template:
    """The single appearance reference a track keeps."""

    box: BoundingBox
    frame: int
    appearance_key: Any = None


@dataclass(frozen=True)
class FrameContext:
    frame: int
    detections: Sequence[Detection] = ()
    images: Optional["ImageSource"] = None


class ImageSource:
    """Per-frame images stored as ``%06d.jpg`` in one directory."""

    def __init__(self, directory, pattern: str = "{:06d}.jpg", cache_size: int = 8):
        self.directory = os.fspath(directory)
        self.pattern = pattern
        self._load = lru_cache(maxsize=cache_size)(self._read)

    def path(self, frame: int) -> str:
        return os.path.join(self.directory, self.pattern.format(frame))

    def _read(self, frame: int) -> np.ndarray:
        from PIL import Image

        with Image.open(self.path(frame)) as im:
            return np.asarray(im.convert("RGB"))

    def __getitem__(self, frame: int) -> np.ndarray:
        return self._load(frame)


class VisualSimilarityProvider(Protocol):
    """Anything that can describe a detection and score a search region."""

    def describe(self, detection: Detection, context: FrameContext) -> Any:
        """Appearance key stored in a template built from ``detection``."""

    def heatmap(self, template: Template, region: SearchRegion, context: FrameContext) -> np.ndarray:
        """``grid x grid`` array with entries in [0, 1]."""


def make_search_region(predicted: BoundingBox, factor: float = 4.5, grid: int = 56,
                       frame: int = 1) -> SearchRegion:
    """Square region around ``predicted`` with side ``factor * sqrt(w * h)``."""
    if not factor > 0:
        raise ContractViolation(f"search factor must be positive, got {factor}")
    side = factor * math.sqrt(predicted.width * predicted.height)
    return SearchRegion(frame=frame, center=predicted.center, side=side, grid=grid)


def similarity_vector(track_heatmap: np.ndarray, region: SearchRegion,
                      detections: Sequence[Detection]) -> np.ndarray:
    """Heatmap response at each detection center; exactly 0 outside the region."""
    out = np.zeros(len(detections), dtype=float)
    for k, det in enumerate(detections):
        cell = region.cell_of(*det.box.center)
        if cell is not None:
            out[k] = track_heatmap[cell]
    return np.clip(out, 0.0, 1.0)


def adaptive_sigma(box_size: tuple[float, float]) -> float:
    """Gaussian radius in grid cells for a box of ``box_size`` grid cells."""
    return max(1.0, min(box_size) / 6.0)


def gaussian_target(center: tuple[float, float], box_size: tuple[float, float], grid: int,
                    sigma: Optional[float] = None) -> np.ndarray:
    """Gaussian heatmap peaked at the cell containing ``center`` (x, y grid coords).

    The peak cell holds exactly 1.0.
    """
    cx, cy = math.floor(center[0]), math.floor(center[1])
    if not (0 <= cx < grid and 0 <= cy < grid):
        raise ContractViolation(f"center {center} outside a {grid}x{grid} grid")
    if sigma is None:
        sigma = adaptive_sigma(box_size)
    xs = np.arange(grid, dtype=float) - cx
    ys = np.arange(grid, dtype=float) - cy
    d2 = ys[:, None] ** 2 + xs[None, :] ** 2
    return np.exp(-d2 / (2.0 * sigma * sigma))


def _check_pair(pred, target):
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ContractViolation(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    return np.clip(pred, FOCAL_EPS, 1.0 - FOCAL_EPS), target


def focal_loss(pred, target, gamma: float = 2.0, beta: float = 4.0) -> float:
    """Penalty-reduced pixel-wise focal loss over a predicted heatmap."""
    p, h = _check_pair(pred, target)
    pos = h == 1.0
    loss_pos = (1.0 - p[pos]) ** gamma * np.log(p[pos])
    neg = ~pos
    loss_neg = (1.0 - h[neg]) ** beta * p[neg] ** gamma * np.log(1.0 - p[neg])
    return float(-(loss_pos.sum() + loss_neg.sum()))


def focal_loss_gradient(pred, target, gamma: float = 2.0, beta: float = 4.0) -> np.ndarray:
    """Elementwise derivative of :func:`focal_loss` with respect to ``pred``."""
    p, h = _check_pair(pred, target)
    pos = h == 1.0
    grad_pos = gamma * (1.0 - p) ** (gamma - 1.0) * np.log(p) - (1.0 - p) ** gamma / p
    grad_neg = -(1.0 - h) ** beta * (
        gamma * p ** (gamma - 1.0) * np.log(1.0 - p) - p**gamma / (1.0 - p)
    )
    return np.where(pos, grad_pos, grad_neg)


def should_update_template(track_box: BoundingBox, other_detections: Sequence[BoundingBox],
                           threshold: float, invert: bool = False) -> bool:
    """Replace the template only when enough of the new box is unoccluded.

    ``invert`` flips the comparison (uncovered ratio *below* threshold).
    """
    if not 0.0 <= threshold <= 1.0:
        raise ContractViolation(f"template threshold must lie in [0, 1], got {threshold}")
    ratio = uncovered_ratio(track_box, other_detections)
    return ratio < threshold if invert else ratio > threshold


class NullProvider:
    """No appearance cue: every heatmap is zero."""

    def describe(self, detection, context):
        return None

    def heatmap(self, template, region, context):
        return np.zeros((region.grid, region.grid))


def _splat(region: SearchRegion, box: BoundingBox) -> np.ndarray:
    gx, gy = region.to_grid(*box.center)
    if not (0 <= gx < region.grid and 0 <= gy < region.grid):
        return np.zeros((region.grid, region.grid))
    size = (box.width * region.scale, box.height * region.scale)
    return gaussian_target((gx, gy), size, region.grid)


class OracleProvider:
    """Stand-in for a perfect (or deliberately imperfect) appearance model.

    The heatmap is a Gaussian placed at the ground-truth location of the
    identity stored in the template. With probability ``corruption`` the
    peak goes to a different identity present in the same frame instead.

    Parameters
    ----------
    ground_truth : mapping frame -> {identity: BoundingBox}
    corruption : float
        Per-(template, frame) probability of pointing at the wrong identity.
    seed : int
    match_iou : float
        Minimum IoU used to recover the identity of a detection that carries
        no payload.
    """

    def __init__(self, ground_truth: Mapping[int, Mapping[int, BoundingBox]],
                 corruption: float = 0.0, seed: int = 0, match_iou: float = 0.5):
        if not 0.0 <= corruption <= 1.0:
            raise ContractViolation(f"corruption must lie in [0, 1], got {corruption}")
        self.ground_truth = ground_truth
        self.corruption = corruption
        self.seed = seed
        self.match_iou = match_iou

    def describe(self, detection, context):
        if detection.payload is not None:
            return detection.payload
        best, best_iou = None, self.match_iou
        for gid, box in sorted(self.ground_truth.get(detection.frame, {}).items()):
            v = iou(box, detection.box)
            if v >= best_iou and (best is None or v > best_iou):
                best, best_iou = gid, v
        return best

    def _rng(self, key, frame):
        key_int = key if isinstance(key, int) and key >= 0 else abs(hash(str(key))) % (2**31)
        seq = np.random.SeedSequence([self.seed, frame, key_int])
        return np.random.Generator(np.random.Philox(seq))

    def heatmap(self, template, region, context):
        objects = self.ground_truth.get(region.frame, {})
        key = template.appearance_key
        if self.corruption > 0 and key is not None:
            rng = self._rng(key, region.frame)
            if rng.random() < self.corruption:
                others = sorted(k for k in objects if k != key)
                key = others[rng.integers(len(others))] if others else None
        box = objects.get(key)
        if box is None:
            return np.zeros((region.grid, region.grid))
        return _splat(region, box)


class HistogramProvider:
    """Colour-histogram correlation between the template patch and each candidate.

    Each detection inside the search region contributes a Gaussian scaled by
    the (non-negative) correlation of its patch histogram with the template's.
    """

    def __init__(self, images: Optional[ImageSource] = None, bins: int = 8):
        self.images = images
        self.bins = bins

    def _source(self, context):
        src = context.images if context.images is not None else self.images
        if src is None:
            raise ContractViolation("HistogramProvider needs an image source")
        return src

    def histogram(self, image: np.ndarray, box: BoundingBox) -> np.ndarray:
        h, w = image.shape[:2]
        x0 = int(np.clip(math.floor(box.left), 0, w - 1))
        y0 = int(np.clip(math.floor(box.top), 0, h - 1))
        x1 = int(np.clip(math.ceil(box.right), x0 + 1, w))
        y1 = int(np.clip(math.ceil(box.bottom), y0 + 1, h))
        patch = image[y0:y1, x0:x1].reshape(-1, image.shape[2] if image.ndim == 3 else 1)
        hist, _ = np.histogramdd(patch, bins=self.bins, range=[(0, 256)] * patch.shape[1])
        hist = hist.ravel()
        return hist / max(hist.sum(), 1.0)

    def describe(self, detection, context):
        return self.histogram(self._source(context)[detection.frame], detection.box)

    @staticmethod
    def correlation(a: np.ndarray, b: np.ndarray) -> float:
        da, db = a - a.mean(), b - b.mean()
        denom = math.sqrt(float(da @ da) * float(db @ db))
        if denom == 0.0:
            return 1.0 if np.array_equal(a, b) else 0.0
        return float(np.clip(da @ db / denom, 0.0, 1.0))

    def heatmap(self, template, region, context):
        out = np.zeros((region.grid, region.grid))
        if template.appearance_key is None or not context.detections:
            return out
        image = self._source(context)[region.frame]
        for det in context.detections:
            if region.cell_of(*det.box.center) is None:
                continue
            score = self.correlation(template.appearance_key, self.histogram(image, det.box))
            if score > 0:
                out = np.maximum(out, score * _splat(region, det.box))
        return out
