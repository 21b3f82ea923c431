"""Deterministic synthetic sequences for oracle-based testing.

Objects move inside a rectangular arena with reflective walls. Three motion
profiles are available: constant velocity, variable speed (piecewise-constant
acceleration switched at exponentially distributed event times, which yields
sprints and abrupt stops) and direction switching (constant speed, random
heading changes at events).

All randomness flows from ``SynthConfig.seed`` through counter-based
(Philox) generators; nothing touches global RNG state.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset_io import GroundTruth, SequenceMeta, write_detections, write_gt, write_seqinfo
from .geometry import BoundingBox, Detection, iou

__all__ = [
    "ProfileKind",
    "MotionProfile",
    "SynthConfig",
    "SyntheticCorpus",
    "generate",
    "crossing_scenario",
    "write_corpus",
]


class ProfileKind(str, enum.Enum):
    CONSTANT_VELOCITY = "constant_velocity"
    VARIABLE_SPEED = "variable_speed"
    DIRECTION_SWITCHING = "direction_switching"


@dataclass(frozen=True)
class MotionProfile:
    """Motion regime.

    ``speed_range`` is the cruise speed range in px/frame. Variable-speed
    objects may sprint up to ``burst`` times the top cruise speed and stop
    completely. ``accel_rate`` counts events per 100 frames.
    """

    kind: ProfileKind = ProfileKind.CONSTANT_VELOCITY
    speed_range: tuple = (2.0, 8.0)
    accel_rate: float = 6.0
    camera_pan: float = 0.0
    burst: float = 2.5

    def __post_init__(self):
        object.__setattr__(self, "kind", ProfileKind(self.kind))
        lo, hi = self.speed_range
        if lo < 0 or hi < lo:
            raise ValueError(f"invalid speed range {self.speed_range}")
        if self.accel_rate < 0:
            raise ValueError("accel_rate must be >= 0")
        if self.burst < 1:
            raise ValueError("burst must be >= 1")


@dataclass(frozen=True)
class SynthConfig:
    num_objects: int = 6
    num_frames: int = 150
    arena: tuple = (1280, 720)
    profile: MotionProfile = field(default_factory=MotionProfile)
    width_range: tuple = (30, 50)
    height_range: tuple = (60, 110)
    noise_std: float = 0.0
    dropout: float = 0.0
    score_high: tuple = (0.75, 0.95)
    score_low: tuple = (0.25, 0.5)
    occlusion_iou: float = 0.3
    min_separation: float = 1.0
    seed: int = 0
    name: str = "synth"

    def __post_init__(self):
        if isinstance(self.profile, dict):
            object.__setattr__(self, "profile", MotionProfile(**self.profile))
        if not 0.0 <= self.dropout <= 1.0:
            raise ValueError("dropout must lie in [0, 1]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        for lo, hi in (self.score_high, self.score_low):
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError("score ranges must lie in [0, 1]")
        if self.num_objects < 0 or self.num_frames < 1:
            raise ValueError("need num_objects >= 0 and num_frames >= 1")
        if min(self.width_range) < 5 or min(self.height_range) < 5:
            raise ValueError("generated boxes must be at least 5x5")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["profile"]["kind"] = self.profile.kind.value
        return d


@dataclass
class SyntheticCorpus:
    meta: SequenceMeta
    gt: GroundTruth
    detections: dict  # frame -> [Detection], payload = gt id
    identities: dict  # frame -> [gt id] aligned with detections


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


def _box(cx, cy, w, h) -> BoundingBox:
    return BoundingBox(round(cx - w / 2.0, 2), round(cy - h / 2.0, 2), float(w), float(h))


def _too_close(p, q, size_p, size_q, factor) -> bool:
    if factor <= 0:
        return False
    return (abs(p[0] - q[0]) < factor * (size_p[0] + size_q[0]) / 2.0
            and abs(p[1] - q[1]) < factor * (size_p[1] + size_q[1]) / 2.0)


def _simulate(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Center trajectories of shape (frames, objects, 2) and (w, h) sizes."""
    rng = _rng(cfg.seed, 0)
    prof = cfg.profile
    W, H = cfg.arena
    n = cfg.num_objects
    sizes = np.stack([
        rng.integers(cfg.width_range[0], cfg.width_range[1] + 1, n),
        rng.integers(cfg.height_range[0], cfg.height_range[1] + 1, n),
    ], axis=1).astype(float)
    pos = np.zeros((n, 2))
    for i in range(n):
        for _ in range(10_000):
            cand = np.array([rng.uniform(sizes[i, 0] / 2, W - sizes[i, 0] / 2),
                             rng.uniform(sizes[i, 1] / 2, H - sizes[i, 1] / 2)])
            if not any(_too_close(cand, pos[j], sizes[i], sizes[j], cfg.min_separation * 1.5) for j in range(i)):
                break
        else:
            raise ValueError("arena too crowded for the requested separation")
        pos[i] = cand
    heading = rng.uniform(0, 2 * math.pi, n)
    cruise = rng.uniform(prof.speed_range[0], prof.speed_range[1], n)
    speed = cruise.copy()
    accel = np.zeros(n)
    rate = prof.accel_rate / 100.0
    next_event = rng.exponential(1 / rate, n) if rate > 0 else np.full(n, np.inf)
    vmax = prof.speed_range[1] * prof.burst
    a_max = max(prof.speed_range[1], 1.0) * 0.5

    traj = np.zeros((cfg.num_frames, n, 2))
    traj[0] = pos
    for t in range(1, cfg.num_frames):
        if prof.kind is not ProfileKind.CONSTANT_VELOCITY:
            for i in np.nonzero(next_event <= t)[0]:
                if prof.kind is ProfileKind.VARIABLE_SPEED:
                    u = rng.random()
                    if u < 0.3:
                        speed[i], accel[i] = 0.0, 0.0          # abrupt stop
                    elif u < 0.6:
                        accel[i] = rng.uniform(0.5, 1.0) * a_max  # sprint
                    else:
                        accel[i] = rng.uniform(-a_max, a_max)
                else:
                    heading[i] = rng.uniform(0, 2 * math.pi)
                next_event[i] = t + rng.exponential(1 / rate)
            if prof.kind is ProfileKind.VARIABLE_SPEED:
                speed = np.clip(speed + accel, 0.0, vmax)
        vel = np.stack([np.cos(heading), np.sin(heading)], axis=1) * speed[:, None]
        vel[:, 0] += prof.camera_pan
        prev = pos.copy()
        new = pos + vel
        for i in range(n):
            for ax, lim in ((0, W), (1, H)):
                lo, hi = sizes[i, ax] / 2, lim - sizes[i, ax] / 2
                if new[i, ax] < lo or new[i, ax] > hi:
                    edge = lo if new[i, ax] < lo else hi
                    new[i, ax] = min(max(2 * edge - new[i, ax], lo), hi)
                    heading[i] = math.pi - heading[i] if ax == 0 else -heading[i]
        # objects that would come too close keep their previous position and turn around
        reverted = np.zeros(n, dtype=bool)
        changed = True
        while changed:
            changed = False
            for i in range(n):
                for j in range(i + 1, n):
                    if _too_close(new[i], new[j], sizes[i], sizes[j], cfg.min_separation):
                        for k in (i, j):
                            if not reverted[k]:
                                reverted[k] = True
                                new[k] = prev[k]
                                heading[k] += math.pi
                                changed = True
        pos = new
        traj[t] = pos
    return traj, sizes


def _detections_from_gt(cfg: SynthConfig, gt: GroundTruth, order_rng_stream: int = 1):
    rng = _rng(cfg.seed, order_rng_stream)
    dets, idents = {}, {}
    for f in range(1, cfg.num_frames + 1):
        objs = sorted(gt.frames.get(f, {}).items())
        frame_dets = []
        for tid, box in objs:
            if cfg.dropout > 0 and rng.random() < cfg.dropout:
                continue
            b = box
            if cfg.noise_std > 0:
                j = rng.normal(0.0, cfg.noise_std, 4)
                w = max(5.0, box.width + j[2])
                h = max(5.0, box.height + j[3])
                b = BoundingBox(round(box.left + j[0], 2), round(box.top + j[1], 2), round(w, 2), round(h, 2))
            occluded = any(iou(box, other) > cfg.occlusion_iou for oid, other in objs if oid != tid)
            lo, hi = cfg.score_low if occluded else cfg.score_high
            score = round(float(rng.uniform(lo, hi)), 2)
            frame_dets.append((b, score, tid))
        # detectors report boxes in spatial order, not by identity
        frame_dets.sort(key=lambda x: (x[0].left, x[0].top, x[2]))
        dets[f] = [Detection(b, s, f, payload=tid) for b, s, tid in frame_dets]
        idents[f] = [tid for _, _, tid in frame_dets]
    return dets, idents


def generate(config: SynthConfig) -> SyntheticCorpus:
    """Ground truth and detections for one synthetic sequence."""
    traj, sizes = _simulate(config)
    gt = GroundTruth()
    for t in range(config.num_frames):
        for i in range(config.num_objects):
            gt.add(t + 1, i + 1, _box(traj[t, i, 0], traj[t, i, 1], sizes[i, 0], sizes[i, 1]))
    dets, idents = _detections_from_gt(config, gt)
    meta = SequenceMeta(name=config.name, frame_rate=25.0, width=int(config.arena[0]),
                        height=int(config.arena[1]), length=config.num_frames)
    return SyntheticCorpus(meta=meta, gt=gt, detections=dets, identities=idents)


def _pass_through(t, tc, x0, v):
    """Two centers approaching at speed v, coinciding at frame tc."""
    return x0 + v * (t - tc), x0 - v * (t - tc)


def _stop_and_bounce(t, tc, x0, v, gap, hold):
    """Approach at speed v, stop abruptly at center distance ``gap`` at frame tc,
    hold for ``hold`` frames, then retreat at speed v."""
    half = gap / 2.0
    if t <= tc:
        d = half + v * (tc - t)
    elif t <= tc + hold:
        d = half
    else:
        d = half + v * (t - tc - hold)
    return x0 - d, x0 + d


def crossing_scenario(seed: int = 0, profile: ProfileKind | str = ProfileKind.CONSTANT_VELOCITY,
                      num_frames: int = 60, speed: float = 8.0, size: tuple = (40, 80),
                      dip_iou: float = 0.8, score_high: float = 0.9, score_dip: float = 0.4,
                      bounce_gap: float = 12.0, hold: int = 4) -> SyntheticCorpus:
    """Crossing pairs that stress identity preservation.

    Constant velocity: one pair passes through each other; their centers
    coincide at frame ``num_frames // 2 + offset`` where the seed picks a
    small offset. Variable speed: the pass-through pair plus two lanes in
    which a pair approaches, stops abruptly ``bounce_gap`` px apart, holds
    and retreats. Detection scores dip to ``score_dip`` whenever a box
    overlaps its partner with IoU above ``dip_iou``.
    """
    profile = ProfileKind(profile)
    rng = _rng(seed, 7)
    w, h = size
    tc = num_frames // 2 + int(rng.integers(-3, 4))
    lanes = [("pass", 150.0)]
    if profile is not ProfileKind.CONSTANT_VELOCITY:
        lanes += [("bounce", 350.0), ("bounce", 550.0)]
    gt = GroundTruth()
    dets, idents = {}, {}
    for f in range(1, num_frames + 1):
        frame = []
        for lane, (kind, cy) in enumerate(lanes):
            x0 = 640.0 + 10.0 * lane
            if kind == "pass":
                xa, xb = _pass_through(f, tc, x0, speed)
            else:
                xa, xb = _stop_and_bounce(f, tc, x0, speed, bounce_gap, hold)
            ba, bb = _box(xa, cy, w, h), _box(xb, cy, w, h)
            ida, idb = 2 * lane + 1, 2 * lane + 2
            gt.add(f, ida, ba)
            gt.add(f, idb, bb)
            score = score_dip if iou(ba, bb) > dip_iou else score_high
            frame += [(ba, score, ida), (bb, score, idb)]
        frame.sort(key=lambda x: (x[0].left, x[0].top, x[2]))
        dets[f] = [Detection(b, s, f, payload=tid) for b, s, tid in frame]
        idents[f] = [tid for _, _, tid in frame]
    meta = SequenceMeta(name=f"crossing_{profile.value}_{seed}", frame_rate=25.0,
                        width=1280, height=720, length=num_frames)
    return SyntheticCorpus(meta=meta, gt=gt, detections=dets, identities=idents)


def write_corpus(corpus: SyntheticCorpus, root) -> Path:
    """Write a corpus in the MOTChallenge directory layout; returns the sequence dir."""
    seq = Path(root) / corpus.meta.name
    (seq / "img1").mkdir(parents=True, exist_ok=True)
    write_seqinfo(corpus.meta, seq / "seqinfo.ini")
    write_gt(corpus.gt, seq / "gt" / "gt.txt")
    write_detections(corpus.detections, seq / "det" / "det.txt")
    return seq
