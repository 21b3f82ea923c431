"""Similarity fusion, optimal assignment and staged (Byte) matching."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable, Optional, Sequence

import numpy as np

from .exceptions import ContractViolation

__all__ = [
    "SimilarityMatrix",
    "Assignment",
    "fuse",
    "linear_assignment",
    "solve_assignment",
    "match_with_gate",
    "split_by_score",
    "byte_associate",
]


@dataclass
class SimilarityMatrix:
    """Track-by-detection similarities with the keys of both axes."""

    values: np.ndarray
    row_keys: list = field(default_factory=list)
    col_keys: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.row_keys), len(self.col_keys))

    @classmethod
    def from_array(cls, values, row_keys=None, col_keys=None) -> "SimilarityMatrix":
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise ContractViolation(f"similarity must be 2-D, got shape {values.shape}")
        n, m = values.shape
        return cls(values, list(range(n)) if row_keys is None else list(row_keys),
                   list(range(m)) if col_keys is None else list(col_keys))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass
class Assignment:
    matches: list = field(default_factory=list)
    unmatched_tracks: list = field(default_factory=list)
    unmatched_detections: list = field(default_factory=list)

    def match_set(self) -> set:
        return set(self.matches)


def fuse(iou_m: SimilarityMatrix, vis_m: SimilarityMatrix, alpha: float) -> SimilarityMatrix:
    """``alpha * IoU + (1 - alpha) * V`` entrywise."""
    if not 0.0 <= alpha <= 1.0:
        raise ContractViolation(f"alpha must lie in [0, 1], got {alpha}")
    if iou_m.values.shape != vis_m.values.shape:
        raise ContractViolation(f"shape mismatch: {iou_m.values.shape} vs {vis_m.values.shape}")
    if iou_m.row_keys != vis_m.row_keys or iou_m.col_keys != vis_m.col_keys:
        raise ContractViolation("row/column keys of the fused matrices differ")
    values = alpha * iou_m.values + (1.0 - alpha) * vis_m.values
    return SimilarityMatrix(values, list(iou_m.row_keys), list(iou_m.col_keys))


def linear_assignment(cost: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-cost assignment by shortest augmenting paths with potentials.

    Every row is assigned when ``n_rows <= n_cols`` (and every column
    otherwise). Among equal-cost columns the lowest index is taken first,
    which makes the result deterministic.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.size == 0:
        return []
    if not np.all(np.isfinite(cost)):
        raise ContractViolation("assignment costs must be finite")
    transposed = cost.shape[0] > cost.shape[1]
    a = cost.T if transposed else cost
    n, m = a.shape
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    p = [0] * (m + 1)  # p[j]: row (1-based) assigned to column j
    way = [0] * (m + 1)
    rows = a.tolist()
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = rows[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    pairs = [(p[j] - 1, j - 1) for j in range(1, m + 1) if p[j] != 0]
    if transposed:
        pairs = [(c, r) for r, c in pairs]
    return sorted(pairs)


def solve_assignment(similarity: SimilarityMatrix) -> Assignment:
    """One-to-one assignment maximizing total similarity."""
    n, m = similarity.values.shape
    pairs = linear_assignment(-similarity.values) if n and m else []
    matched_r = {r for r, _ in pairs}
    matched_c = {c for _, c in pairs}
    return Assignment(
        matches=[(similarity.row_keys[r], similarity.col_keys[c]) for r, c in pairs],
        unmatched_tracks=[k for i, k in enumerate(similarity.row_keys) if i not in matched_r],
        unmatched_detections=[k for j, k in enumerate(similarity.col_keys) if j not in matched_c],
    )


def match_with_gate(similarity: SimilarityMatrix, min_similarity: float) -> Assignment:
    """:func:`solve_assignment`, then drop matches scoring below ``min_similarity``."""
    if not 0.0 <= min_similarity <= 1.0:
        raise ContractViolation(f"gate must lie in [0, 1], got {min_similarity}")
    result = solve_assignment(similarity)
    if min_similarity <= 0.0:
        return result
    row_index = {k: i for i, k in enumerate(similarity.row_keys)}
    col_index = {k: j for j, k in enumerate(similarity.col_keys)}
    kept = []
    dropped_r, dropped_c = set(), set()
    for r, c in result.matches:
        if similarity.values[row_index[r], col_index[c]] < min_similarity:
            dropped_r.add(r)
            dropped_c.add(c)
        else:
            kept.append((r, c))
    return Assignment(
        matches=kept,
        unmatched_tracks=[k for k in similarity.row_keys if k in dropped_r or k in set(result.unmatched_tracks)],
        unmatched_detections=[k for k in similarity.col_keys
                              if k in dropped_c or k in set(result.unmatched_detections)],
    )


def split_by_score(scores: Sequence[float], tau_high: float, tau_low: float) -> tuple[list[int], list[int]]:
    """Indices of high-score (>= tau_high) and low-score (tau_low..tau_high) detections.

    Detections scoring below ``tau_low`` appear in neither list.
    """
    high = [i for i, s in enumerate(scores) if s >= tau_high]
    low = [i for i, s in enumerate(scores) if tau_low <= s < tau_high]
    return high, low


def byte_associate(
    track_keys: Sequence[Hashable],
    track_boxes: Sequence,
    detections: Sequence,
    visual: Optional[Callable[[Hashable], np.ndarray]] = None,
    *,
    alpha: float = 0.6,
    tau_high: float = 0.6,
    tau_low: float = 0.1,
    first_gate: float = 0.1,
    second_gate: float = 0.5,
    second_stage_keys: Optional[Sequence[Hashable]] = None,
    use_iou: bool = True,
    visual_in_second_stage: bool = False,
    extra_cost: Optional[Callable[[Hashable, int], float]] = None,
    extra_cost_weight: float = 0.0,
) -> tuple[Assignment, Assignment]:
    """Two-stage association of tracks to one frame of detections.

    Stage one matches every track against high-score detections on the
    fused similarity. Stage two takes the tracks left over (restricted to
    ``second_stage_keys`` when given) and matches them against low-score
    detections on IoU alone, unless ``visual_in_second_stage`` is set.

    ``visual(key)`` returns the track's visual similarity to every entry of
    ``detections``, or None to score that track on IoU alone. With
    ``use_iou=False`` the first stage scores on visual similarity only and
    ``alpha`` is ignored; the second stage stays IoU-based either way.
    ``extra_cost(key, det_index)`` is subtracted from the fused similarity
    with weight ``extra_cost_weight`` (clipped to [0, 1]).

    Detection keys in the returned assignments are indices into ``detections``.
    """
    from .geometry import iou_matrix

    if not 0.0 <= tau_low <= tau_high <= 1.0:
        raise ContractViolation(f"need 0 <= tau_low <= tau_high <= 1, got {tau_low}, {tau_high}")
    boxes_by_key = dict(zip(track_keys, track_boxes))
    high, low = split_by_score([d.score for d in detections], tau_high, tau_low)

    def similarity(keys, det_idx, with_visual):
        keys = list(keys)
        shape = (len(keys), len(det_idx))
        iou_v = iou_matrix([boxes_by_key[k] for k in keys], [detections[j].box for j in det_idx])
        iou_m = SimilarityMatrix(iou_v, keys, list(det_idx))
        if not with_visual:
            return iou_m
        if not use_iou:
            iou_m = SimilarityMatrix(np.zeros(shape), keys, list(det_idx))
        vis_v = np.zeros(shape)
        iou_only_rows = []
        if visual is not None and shape[0] and shape[1]:
            for r, k in enumerate(keys):
                vec = visual(k)
                if vec is None:
                    iou_only_rows.append(r)
                else:
                    vis_v[r] = np.asarray(vec, dtype=float)[list(det_idx)]
        vis_m = SimilarityMatrix(vis_v, keys, list(det_idx))
        fused = fuse(iou_m, vis_m, alpha) if use_iou else vis_m
        for r in iou_only_rows:
            fused.values[r] = iou_m.values[r]
        if extra_cost is not None and extra_cost_weight:
            for r, k in enumerate(keys):
                for c, j in enumerate(det_idx):
                    fused.values[r, c] -= extra_cost_weight * extra_cost(k, j)
            np.clip(fused.values, 0.0, 1.0, out=fused.values)
        return fused

    first = match_with_gate(similarity(track_keys, high, True), first_gate)
    pool = first.unmatched_tracks
    if second_stage_keys is not None:
        allowed = set(second_stage_keys)
        pool = [k for k in pool if k in allowed]
    second = match_with_gate(similarity(pool, low, visual_in_second_stage), second_gate)
    return first, second
