"""MOTChallenge-format files and the motion statistics computed from ground truth.

Layout of a sequence directory::

    <seq>/seqinfo.ini
    <seq>/gt/gt.txt      frame,id,left,top,width,height,conf,class,visibility
    <seq>/det/det.txt    frame,-1,left,top,width,height,score,-1,-1,-1
    <seq>/img1/%06d.jpg

Frames are 1-based and boxes use a top-left origin.
"""

from __future__ import annotations

import configparser
import enum
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .exceptions import DatasetFormatError
from .geometry import BoundingBox, Detection, iou
from .motion import kf_initiate, kf_predict, kf_update, state_to_box
from .tracker import TrackRow, TrackingResult, filter_tiny_boxes

__all__ = [
    "Category",
    "SequenceMeta",
    "GroundTruth",
    "IoUStats",
    "read_gt",
    "write_gt",
    "read_detections",
    "write_detections",
    "read_results",
    "write_results",
    "format_results",
    "read_seqinfo",
    "write_seqinfo",
    "adjacent_iou_stats",
    "kf_adjacent_iou_stats",
    "category_stats",
    "find_sequences",
]


class Category(str, enum.Enum):
    BASKETBALL = "basketball"
    VOLLEYBALL = "volleyball"
    FOOTBALL = "football"
    OTHER = "other"


@dataclass(frozen=True)
class SequenceMeta:
    name: str
    frame_rate: float
    width: int
    height: int
    length: int
    im_dir: str = "img1"
    category: Optional[Category] = None

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"sequence length must be >= 1, got {self.length}")
        if not self.frame_rate > 0:
            raise ValueError(f"frame rate must be positive, got {self.frame_rate}")


@dataclass
class GroundTruth:
    """Per-frame ``{id: box}`` plus the visibility column, kept for round trips."""

    frames: dict = field(default_factory=dict)
    visibility: dict = field(default_factory=dict)

    def add(self, frame: int, track_id: int, box: BoundingBox, visibility: float = 1.0) -> None:
        slot = self.frames.setdefault(frame, {})
        if track_id in slot:
            raise ValueError(f"id {track_id} appears twice in frame {frame}")
        slot[track_id] = box
        self.visibility.setdefault(frame, {})[track_id] = visibility

    def __eq__(self, other):
        return isinstance(other, GroundTruth) and self.frames == other.frames and self.visibility == other.visibility

    def __len__(self):
        return sum(len(v) for v in self.frames.values())

    def ids(self) -> list[int]:
        return sorted({i for f in self.frames.values() for i in f})

    def tracks(self) -> dict[int, list[tuple[int, BoundingBox]]]:
        out: dict[int, list] = {}
        for f in sorted(self.frames):
            for tid, box in sorted(self.frames[f].items()):
                out.setdefault(tid, []).append((f, box))
        return out


def _fmt(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def _rows(path):
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        yield lineno, [c.strip() for c in line.split(",")]


def _parse_box(path, lineno, cols) -> BoundingBox:
    try:
        left, top, w, h = (float(c) for c in cols)
    except ValueError:
        raise DatasetFormatError(path, lineno, f"non-numeric box {cols}") from None
    if not all(math.isfinite(v) for v in (left, top, w, h)):
        raise DatasetFormatError(path, lineno, "non-finite box coordinates")
    if w <= 0 or h <= 0:
        raise DatasetFormatError(path, lineno, f"non-positive box size {w}x{h}")
    return BoundingBox(left, top, w, h)


def _parse_frame(path, lineno, s) -> int:
    try:
        v = float(s)
    except ValueError:
        raise DatasetFormatError(path, lineno, f"bad frame index {s!r}") from None
    if v != int(v) or v < 1:
        raise DatasetFormatError(path, lineno, f"frame index must be a positive integer, got {s!r}")
    return int(v)


def read_gt(path) -> GroundTruth:
    """Parse ``gt.txt``; rows with conf 0 are ignored."""
    gt = GroundTruth()
    for lineno, cols in _rows(path):
        if len(cols) < 6:
            raise DatasetFormatError(path, lineno, f"expected >= 6 columns, got {len(cols)}")
        frame = _parse_frame(path, lineno, cols[0])
        try:
            tid = int(float(cols[1]))
            conf = float(cols[6]) if len(cols) > 6 else 1.0
            vis = float(cols[8]) if len(cols) > 8 else 1.0
        except ValueError:
            raise DatasetFormatError(path, lineno, "non-numeric id/conf/visibility") from None
        if conf == 0:
            continue
        box = _parse_box(path, lineno, cols[2:6])
        try:
            gt.add(frame, tid, box, vis)
        except ValueError as exc:
            raise DatasetFormatError(path, lineno, str(exc)) from None
    return gt


def write_gt(gt: GroundTruth, path) -> None:
    lines = []
    for f in sorted(gt.frames):
        for tid, b in sorted(gt.frames[f].items()):
            vis = gt.visibility.get(f, {}).get(tid, 1.0)
            lines.append(f"{f},{tid},{_fmt(b.left)},{_fmt(b.top)},{_fmt(b.width)},{_fmt(b.height)},1,1,{_fmt(vis)}\n")
    _write_text(path, "".join(lines))


def read_detections(path, min_w: float = 0.0, min_h: float = 0.0) -> dict[int, list[Detection]]:
    """Parse ``det.txt`` into ``{frame: [Detection]}``.

    Boxes narrower than ``min_w`` or shorter than ``min_h`` are dropped; by
    default nothing is filtered here (the tracker filters on its own).
    """
    out: dict[int, list[Detection]] = {}
    for lineno, cols in _rows(path):
        if len(cols) < 7:
            raise DatasetFormatError(path, lineno, f"expected >= 7 columns, got {len(cols)}")
        frame = _parse_frame(path, lineno, cols[0])
        box = _parse_box(path, lineno, cols[2:6])
        try:
            score = float(cols[6])
        except ValueError:
            raise DatasetFormatError(path, lineno, f"non-numeric score {cols[6]!r}") from None
        if not 0.0 <= score <= 1.0:
            raise DatasetFormatError(path, lineno, f"score {score} outside [0, 1]")
        out.setdefault(frame, []).append(Detection(box, score, frame))
    if min_w > 0 or min_h > 0:
        out = {f: filter_tiny_boxes(d, min_w, min_h) for f, d in out.items()}
    return out


def write_detections(detections: Mapping[int, Sequence[Detection]], path) -> None:
    lines = []
    for f in sorted(detections):
        for d in detections[f]:
            b = d.box
            lines.append(f"{f},-1,{_fmt(b.left)},{_fmt(b.top)},{_fmt(b.width)},{_fmt(b.height)},{_fmt(d.score)},-1,-1,-1\n")
    _write_text(path, "".join(lines))


def format_results(result: TrackingResult) -> str:
    """MOT result rows sorted by (frame, id) with two-decimal fixed point."""
    return "".join(
        f"{r.frame},{r.track_id},{_fmt(r.box.left)},{_fmt(r.box.top)},{_fmt(r.box.width)},"
        f"{_fmt(r.box.height)},{_fmt(r.score)},-1,-1,-1\n"
        for r in result.rows
    )


def write_results(result: TrackingResult, path) -> None:
    _write_text(path, format_results(result))


def read_results(path) -> TrackingResult:
    """Parse tracker output (same row layout as det.txt, id in column 2)."""
    rows = []
    seen = set()
    for lineno, cols in _rows(path):
        if len(cols) < 7:
            raise DatasetFormatError(path, lineno, f"expected >= 7 columns, got {len(cols)}")
        frame = _parse_frame(path, lineno, cols[0])
        try:
            tid = int(float(cols[1]))
            score = float(cols[6])
        except ValueError:
            raise DatasetFormatError(path, lineno, "non-numeric id or score") from None
        if (frame, tid) in seen:
            raise DatasetFormatError(path, lineno, f"id {tid} appears twice in frame {frame}")
        seen.add((frame, tid))
        rows.append(TrackRow(frame, tid, _parse_box(path, lineno, cols[2:6]), score))
    return TrackingResult(rows)


def _write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


_SEQINFO_KEYS = ("name", "imDir", "frameRate", "seqLength", "imWidth", "imHeight")


def read_seqinfo(path) -> SequenceMeta:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if not parser.read(path):
        raise FileNotFoundError(path)
    if "Sequence" not in parser:
        raise DatasetFormatError(path, None, "missing [Sequence] section")
    sec = parser["Sequence"]
    for key in _SEQINFO_KEYS:
        if key not in sec:
            raise DatasetFormatError(path, None, f"missing key {key!r}")
    category = sec.get("category")
    try:
        return SequenceMeta(
            name=sec["name"],
            frame_rate=float(sec["frameRate"]),
            width=int(sec["imWidth"]),
            height=int(sec["imHeight"]),
            length=int(sec["seqLength"]),
            im_dir=sec["imDir"],
            category=Category(category) if category else None,
        )
    except ValueError as exc:
        raise DatasetFormatError(path, None, str(exc)) from None


def write_seqinfo(meta: SequenceMeta, path) -> None:
    rate = int(meta.frame_rate) if float(meta.frame_rate).is_integer() else meta.frame_rate
    lines = [
        "[Sequence]",
        f"name={meta.name}",
        f"imDir={meta.im_dir}",
        f"frameRate={rate}",
        f"seqLength={meta.length}",
        f"imWidth={meta.width}",
        f"imHeight={meta.height}",
        "imExt=.jpg",
    ]
    if meta.category is not None:
        lines.append(f"category={meta.category.value}")
    _write_text(path, "\n".join(lines) + "\n")


def find_sequences(root) -> list[Path]:
    """Sequence directories (those holding a seqinfo.ini) under ``root``, sorted by name."""
    root = Path(root)
    if (root / "seqinfo.ini").exists():
        return [root]
    return sorted(p for p in root.iterdir() if p.is_dir() and (p / "seqinfo.ini").exists())


# -- motion statistics -----------------------------------------------------


@dataclass
class IoUStats:
    counts: np.ndarray
    edges: np.ndarray
    mean: float
    count: int
    samples: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "count": self.count,
                "edges": [float(e) for e in self.edges], "counts": [int(c) for c in self.counts]}


def _stats(samples: Iterable[float], bins: int = 20) -> IoUStats:
    s = np.asarray(list(samples), dtype=float)
    counts, edges = np.histogram(s, bins=bins, range=(0.0, 1.0))
    mean = float(s.mean()) if s.size else float("nan")
    return IoUStats(counts=counts, edges=edges, mean=mean, count=int(s.size), samples=s)


def _runs(track: list[tuple[int, BoundingBox]]) -> list[list[BoundingBox]]:
    """Split a track into runs of consecutive frames."""
    runs, cur, prev = [], [], None
    for f, box in track:
        if prev is not None and f != prev + 1:
            runs.append(cur)
            cur = []
        cur.append(box)
        prev = f
    if cur:
        runs.append(cur)
    return runs


def _as_gt(gt) -> GroundTruth:
    if isinstance(gt, GroundTruth):
        return gt
    out = GroundTruth()
    for f, objs in gt.items():
        for tid, box in objs.items():
            out.add(f, tid, box)
    return out


def adjacent_iou_stats(gt, bins: int = 20) -> IoUStats:
    """IoU of each object's boxes in consecutive frames."""
    samples = []
    for track in _as_gt(gt).tracks().values():
        for run in _runs(track):
            samples.extend(iou(a, b) for a, b in zip(run, run[1:]))
    return _stats(samples, bins)


def kf_adjacent_iou_stats(gt, warmup: int = 2, bins: int = 20) -> IoUStats:
    """IoU between a Kalman one-step prediction and the true next box.

    The filter is driven by the ground truth of previous frames; samples
    start once ``warmup`` observations have been absorbed.
    """
    samples = []
    for track in _as_gt(gt).tracks().values():
        for run in _runs(track):
            if len(run) <= warmup:
                continue
            state = kf_initiate(run[0])
            for k, box in enumerate(run[1:], start=1):
                state = kf_predict(state)
                if k >= warmup:
                    samples.append(iou(state_to_box(state), box))
                state = kf_update(state, box)
    return _stats(samples, bins)


def category_stats(gts: Sequence, metas: Sequence[SequenceMeta]) -> dict[str, dict[str, float]]:
    """Per-category corpus statistics.

    Columns: mean frames per sequence, mean tracks per sequence, mean track
    gap length (frames absent between a track's first and last appearance),
    mean track length (frames present) and boxes per frame. A ``total``
    row covers every sequence.
    """
    groups: dict[str, list[int]] = {}
    for i, m in enumerate(metas):
        cat = (m.category or Category.OTHER).value
        groups.setdefault(cat, []).append(i)
    groups["total"] = list(range(len(metas)))
    out = {}
    for cat, idx in groups.items():
        frames, ntracks, gaps, lengths, boxes = [], [], [], [], 0
        for i in idx:
            gt = _as_gt(gts[i])
            frames.append(metas[i].length)
            tracks = gt.tracks()
            ntracks.append(len(tracks))
            for tr in tracks.values():
                fs = [f for f, _ in tr]
                lengths.append(len(fs))
                gaps.append((fs[-1] - fs[0] + 1) - len(fs))
            boxes += len(gt)
        out[cat] = {
            "frames": float(np.mean(frames)) if frames else 0.0,
            "tracks": float(np.mean(ntracks)) if ntracks else 0.0,
            "track_gap_len": float(np.mean(gaps)) if gaps else 0.0,
            "track_len": float(np.mean(lengths)) if lengths else 0.0,
            "boxes_per_frame": boxes / max(1, sum(frames)),
        }
    return out
