"""Online MixSort tracker and interpolation post-processing.

The per-frame pipeline is: drop tiny boxes, predict track locations, build
IoU and visual similarities, fuse them, associate in two stages, then run
the track lifecycle (update, age, spawn).

:class:`MixSortTracker` follows the scikit-learn estimator conventions:
hyper-parameters are constructor arguments exposed by ``get_params``;
``fit`` validates them and resets state; ``predict`` tracks a whole
sequence and returns a :class:`TrackingResult`.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .appearance import (
    FrameContext,
    ImageSource,
    NullProvider,
    Template,
    make_search_region,
    should_update_template,
    similarity_vector,
)
from .association import byte_associate
from .exceptions import ConfigError, ContractViolation, KalmanError
from .geometry import BoundingBox, Detection
from .motion import (
    KalmanState,
    MotionMode,
    kf_initiate,
    kf_predict,
    kf_update,
    oc_reupdate,
    ocm_direction_cost,
    state_to_box,
)

__all__ = [
    "TrackState",
    "BaseMode",
    "Track",
    "TrackerConfig",
    "TrackRow",
    "TrackingResult",
    "MixSortTracker",
    "run_sequence",
    "filter_tiny_boxes",
    "linear_interpolation",
    "LinearInterpolator",
]

logger = logging.getLogger(__name__)


class TrackState(str, enum.Enum):
    TENTATIVE = "tentative"
    ACTIVE = "active"
    LOST = "lost"
    REMOVED = "removed"


class BaseMode(str, enum.Enum):
    BYTE = "byte"
    OC = "oc"


_TRANSITIONS = {
    TrackState.TENTATIVE: {TrackState.ACTIVE, TrackState.REMOVED},
    TrackState.ACTIVE: {TrackState.LOST},
    TrackState.LOST: {TrackState.ACTIVE, TrackState.REMOVED},
    TrackState.REMOVED: set(),
}


@dataclass
class Track:
    id: int
    state: TrackState
    template: Template
    motion: Optional[KalmanState] = None
    history: list = field(default_factory=list)  # (frame, box, score)
    frames_since_update: int = 0
    hits: int = 1
    observed_motion: Optional[KalmanState] = None  # posterior at the last observation

    @property
    def last_frame(self) -> int:
        return self.history[-1][0]

    @property
    def last_box(self) -> BoundingBox:
        return self.history[-1][1]

    def boxes(self) -> list[BoundingBox]:
        return [b for _, b, _ in self.history]

    def transition(self, new_state: TrackState) -> None:
        if new_state == self.state:
            return
        if new_state not in _TRANSITIONS[self.state]:
            raise ContractViolation(f"track {self.id}: illegal transition {self.state.value} -> {new_state.value}")
        self.state = new_state


@dataclass(frozen=True)
class TrackerConfig:
    """All tracker hyper-parameters.

    ``alpha`` weighs IoU against visual similarity; ``interp_max_gap`` is
    the largest number of missing frames linear interpolation will fill;
    boxes narrower than ``min_box_w`` or shorter than ``min_box_h`` are
    dropped before association.
    """

    alpha: float = 0.6
    tau_high: float = 0.6
    tau_low: float = 0.1
    init_score: float = 0.7
    max_lost_age: int = 30
    search_factor: float = 4.5
    grid: int = 56
    template_threshold: float = 0.6
    motion_mode: str = "kalman"
    base_mode: str = "byte"
    interp_max_gap: int = 20
    min_box_w: float = 5.0
    min_box_h: float = 5.0
    first_gate: float = 0.1
    second_gate: float = 0.5
    min_hits: int = 1
    use_iou: bool = True
    visual_in_second_stage: bool = False
    fuse_lost_tracks: bool = True
    oc_direction_weight: float = 0.2
    oc_delta: int = 3
    invert_template_rule: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= self.tau_low <= self.tau_high <= 1.0:
            raise ConfigError(f"need 0 <= tau_low <= tau_high <= 1, got {self.tau_low}, {self.tau_high}")
        for name in ("alpha", "init_score", "template_threshold", "first_gate", "second_gate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        for name in ("max_lost_age", "interp_max_gap", "min_box_w", "min_box_h", "oc_direction_weight"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.min_hits < 1:
            raise ConfigError(f"min_hits must be >= 1, got {self.min_hits}")
        if self.oc_delta < 1:
            raise ConfigError(f"oc_delta must be >= 1, got {self.oc_delta}")
        if not self.search_factor > 0:
            raise ConfigError(f"search_factor must be positive, got {self.search_factor}")
        if self.grid < 2:
            raise ConfigError(f"grid must be >= 2, got {self.grid}")
        try:
            MotionMode(self.motion_mode)
        except ValueError:
            raise ConfigError(f"unknown motion_mode {self.motion_mode!r}") from None
        try:
            BaseMode(self.base_mode)
        except ValueError:
            raise ConfigError(f"unknown base_mode {self.base_mode!r}") from None

    @property
    def effective_motion(self) -> MotionMode:
        mode = MotionMode(self.motion_mode)
        if BaseMode(self.base_mode) is BaseMode.OC and mode is MotionMode.KALMAN:
            return MotionMode.KALMAN_OC
        return mode

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class TrackRow:
    frame: int
    track_id: int
    box: BoundingBox
    score: float
    interpolated: bool = False


class TrackingResult:
    """Emitted boxes of one sequence, keyed by frame and track id."""

    def __init__(self, rows: Iterable[TrackRow] = ()):
        self.rows = sorted(rows, key=lambda r: (r.frame, r.track_id))
        seen = set()
        for r in self.rows:
            if (r.frame, r.track_id) in seen:
                raise ContractViolation(f"duplicate track {r.track_id} in frame {r.frame}")
            seen.add((r.frame, r.track_id))

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __eq__(self, other):
        return isinstance(other, TrackingResult) and self.rows == other.rows

    def track_ids(self) -> list[int]:
        return sorted({r.track_id for r in self.rows})

    def by_track(self) -> dict[int, list[TrackRow]]:
        out: dict[int, list[TrackRow]] = {}
        for r in self.rows:
            out.setdefault(r.track_id, []).append(r)
        return out

    def frames(self, include_interpolated: bool = True) -> dict[int, dict[int, BoundingBox]]:
        out: dict[int, dict[int, BoundingBox]] = {}
        for r in self.rows:
            if r.interpolated and not include_interpolated:
                continue
            out.setdefault(r.frame, {})[r.track_id] = r.box
        return out


def filter_tiny_boxes(detections: Sequence[Detection], min_w: float = 5.0, min_h: float = 5.0) -> list[Detection]:
    """Drop detections with width < ``min_w`` or height < ``min_h``."""
    return [d for d in detections if not (d.box.width < min_w or d.box.height < min_h)]


def _check_provider(provider):
    if provider is None:
        return NullProvider()
    for attr in ("describe", "heatmap"):
        if not callable(getattr(provider, attr, None)):
            raise ConfigError(f"provider {provider!r} lacks a callable {attr}()")
    return provider


class MixSortTracker(BaseEstimator):
    """Online multi-object tracker fusing IoU with template-based visual similarity.

    Parameters mirror :class:`TrackerConfig`; ``provider`` supplies visual
    similarity heatmaps (``None`` means no appearance cue).

    Attributes
    ----------
    tracks_ : list of Track
        Tracks that are not yet removed.
    removed_tracks_ : list of Track
    frame_ : int
        Last processed frame (0 before the first).
    match_log_ : dict
        frame -> sorted list of (track id, detection index, stage); the
        detection index refers to the frame's detections after tiny-box
        filtering.
    """

    def __init__(self, alpha=0.6, tau_high=0.6, tau_low=0.1, init_score=0.7, max_lost_age=30,
                 search_factor=4.5, grid=56, template_threshold=0.6, motion_mode="kalman",
                 base_mode="byte", interp_max_gap=20, min_box_w=5.0, min_box_h=5.0,
                 first_gate=0.1, second_gate=0.5, min_hits=1, use_iou=True,
                 visual_in_second_stage=False, fuse_lost_tracks=True, oc_direction_weight=0.2,
                 oc_delta=3, invert_template_rule=False, provider=None):
        self.alpha = alpha
        self.tau_high = tau_high
        self.tau_low = tau_low
        self.init_score = init_score
        self.max_lost_age = max_lost_age
        self.search_factor = search_factor
        self.grid = grid
        self.template_threshold = template_threshold
        self.motion_mode = motion_mode
        self.base_mode = base_mode
        self.interp_max_gap = interp_max_gap
        self.min_box_w = min_box_w
        self.min_box_h = min_box_h
        self.first_gate = first_gate
        self.second_gate = second_gate
        self.min_hits = min_hits
        self.use_iou = use_iou
        self.visual_in_second_stage = visual_in_second_stage
        self.fuse_lost_tracks = fuse_lost_tracks
        self.oc_direction_weight = oc_direction_weight
        self.oc_delta = oc_delta
        self.invert_template_rule = invert_template_rule
        self.provider = provider

    @classmethod
    def from_config(cls, config: TrackerConfig, provider=None) -> "MixSortTracker":
        return cls(**config.to_dict(), provider=provider)

    @property
    def config(self) -> TrackerConfig:
        params = self.get_params(deep=False)
        return TrackerConfig(**{k: params[k] for k in TrackerConfig.field_names()})

    def fit(self, X=None, y=None):
        """Validate hyper-parameters and reset all tracking state."""
        self.config_ = self.config
        self.provider_ = _check_provider(self.provider)
        self.motion_ = self.config_.effective_motion
        self.tracks_: list[Track] = []
        self.removed_tracks_: list[Track] = []
        self.frame_ = 0
        self.next_id_ = 1
        self.match_log_: dict[int, list] = {}
        self._visual_cache: dict = {}
        return self

    reset = fit

    def _ensure_fitted(self):
        if not hasattr(self, "config_"):
            self.fit()

    # -- per-frame pipeline -------------------------------------------------

    def _predicted_box(self, track: Track) -> BoundingBox:
        if track.motion is None:
            return track.last_box
        return state_to_box(track.motion)

    def _advance_motion(self, steps: int) -> None:
        if self.motion_ is MotionMode.NONE:
            return
        for t in self.tracks_:
            for _ in range(steps):
                state = t.motion
                if t.state is TrackState.LOST:
                    mean = state.mean.copy()
                    mean[7] = 0.0
                    state = KalmanState(mean, state.covariance)
                t.motion = kf_predict(state)

    def step(self, detections: Sequence[Detection], frame: Optional[int] = None,
             images: Optional[ImageSource] = None) -> list[tuple[int, BoundingBox, float]]:
        """Process one frame; returns (track id, box, score) for active tracks updated now."""
        self._ensure_fitted()
        cfg = self.config_
        if frame is None:
            frame = detections[0].frame if detections else self.frame_ + 1
        if frame <= self.frame_:
            raise ContractViolation(f"frame {frame} does not follow frame {self.frame_}")
        for d in detections:
            if d.frame != frame:
                raise ContractViolation(f"detection from frame {d.frame} passed to frame {frame}")
        elapsed = frame - self.frame_ if self.frame_ else 1
        self.frame_ = frame

        dets = filter_tiny_boxes(detections, cfg.min_box_w, cfg.min_box_h)
        ctx = FrameContext(frame=frame, detections=tuple(dets), images=images)
        self._advance_motion(elapsed)
        self._visual_cache = {k: v for k, v in self._visual_cache.items() if k[1] == frame}

        by_id = {t.id: t for t in self.tracks_}
        keys = [t.id for t in self.tracks_]
        predicted = [self._predicted_box(t) for t in self.tracks_]
        predicted_by_id = dict(zip(keys, predicted))

        def visual(track_id):
            track = by_id[track_id]
            if track.state is TrackState.LOST and not cfg.fuse_lost_tracks:
                return None
            key = (track_id, frame)
            if key not in self._visual_cache:
                region = make_search_region(predicted_by_id[track_id], cfg.search_factor, cfg.grid, frame)
                heat = self.provider_.heatmap(track.template, region, ctx)
                self._visual_cache[key] = similarity_vector(heat, region, dets)
            return self._visual_cache[key]

        extra_cost = None
        if self.motion_ is MotionMode.KALMAN_OC and cfg.oc_direction_weight > 0:
            def extra_cost(track_id, j):
                hist = by_id[track_id].boxes()
                return ocm_direction_cost(hist, dets[j].box, cfg.oc_delta) if len(hist) >= 2 else 0.0

        first, second = byte_associate(
            keys, predicted, dets, visual,
            alpha=cfg.alpha, tau_high=cfg.tau_high, tau_low=cfg.tau_low,
            first_gate=cfg.first_gate, second_gate=cfg.second_gate,
            second_stage_keys=[t.id for t in self.tracks_ if t.state is not TrackState.LOST],
            use_iou=cfg.use_iou, visual_in_second_stage=cfg.visual_in_second_stage,
            extra_cost=extra_cost, extra_cost_weight=cfg.oc_direction_weight,
        )

        emitted = []
        log = []
        matched_tracks = set()
        spawn_candidates = list(first.unmatched_detections)
        for stage, assignment in ((1, first), (2, second)):
            for track_id, j in assignment.matches:
                track = by_id[track_id]
                det = dets[j]
                try:
                    self._absorb(track, det, frame)
                except KalmanError as exc:
                    logger.warning("frame %d: track %d update failed (%s); match dropped", frame, track_id, exc)
                    if stage == 1:
                        spawn_candidates.append(j)
                    continue
                matched_tracks.add(track_id)
                log.append((track_id, j, stage))
                others = [d.box for i, d in enumerate(dets) if i != j]
                if should_update_template(det.box, others, cfg.template_threshold, cfg.invert_template_rule):
                    track.template = Template(det.box, frame, self.provider_.describe(det, ctx))
                if track.state is TrackState.ACTIVE:
                    emitted.append((track.id, det.box, det.score))

        for track in self.tracks_:
            if track.id in matched_tracks:
                continue
            track.frames_since_update += elapsed
            if track.state is TrackState.TENTATIVE:
                track.transition(TrackState.REMOVED)
                continue
            if track.state is TrackState.ACTIVE:
                track.transition(TrackState.LOST)
            if track.state is TrackState.LOST and track.frames_since_update > cfg.max_lost_age:
                track.transition(TrackState.REMOVED)

        for j in sorted(spawn_candidates):
            det = dets[j]
            if det.score < cfg.init_score:
                continue
            track = self._spawn(det, frame, ctx)
            log.append((track.id, j, 0))
            if track.state is TrackState.ACTIVE:
                emitted.append((track.id, det.box, det.score))

        self.removed_tracks_.extend(t for t in self.tracks_ if t.state is TrackState.REMOVED)
        self.tracks_ = [t for t in self.tracks_ if t.state is not TrackState.REMOVED]
        self.match_log_[frame] = sorted(log)
        return sorted(emitted, key=lambda e: e[0])

    def _absorb(self, track: Track, det: Detection, frame: int) -> None:
        if self.motion_ is not MotionMode.NONE:
            if (self.motion_ is MotionMode.KALMAN_OC and track.state is TrackState.LOST
                    and track.observed_motion is not None):
                state = oc_reupdate(track.observed_motion, track.last_box, det.box, frame - track.last_frame)
            else:
                state = kf_update(track.motion, det.box)
            track.motion = state
            track.observed_motion = state
        track.history.append((frame, det.box, det.score))
        track.frames_since_update = 0
        track.hits += 1
        if track.state is TrackState.LOST:
            track.transition(TrackState.ACTIVE)
        elif track.state is TrackState.TENTATIVE and track.hits >= self.config_.min_hits:
            track.transition(TrackState.ACTIVE)

    def _spawn(self, det: Detection, frame: int, ctx: FrameContext) -> Track:
        cfg = self.config_
        motion = None if self.motion_ is MotionMode.NONE else kf_initiate(det.box)
        state = TrackState.ACTIVE if cfg.min_hits <= 1 else TrackState.TENTATIVE
        track = Track(
            id=self.next_id_,
            state=state,
            template=Template(det.box, frame, self.provider_.describe(det, ctx)),
            motion=motion,
            history=[(frame, det.box, det.score)],
            observed_motion=motion,
        )
        self.next_id_ += 1
        self.tracks_.append(track)
        return track

    # -- batch API -----------------------------------------------------------

    def predict(self, sequence, num_frames: Optional[int] = None,
                images: Optional[ImageSource] = None) -> TrackingResult:
        """Track a whole sequence from scratch.

        ``sequence`` maps frame -> detections, or is a list whose k-th entry
        holds the detections of frame k + 1. Frames with no entry are
        processed as empty frames up to ``num_frames``.
        """
        self.fit()
        frames = _as_frame_map(sequence)
        last = max([0, *frames]) if num_frames is None else num_frames
        rows = []
        for f in range(1, last + 1):
            for track_id, box, score in self.step(frames.get(f, []), frame=f, images=images):
                rows.append(TrackRow(f, track_id, box, score))
        return TrackingResult(rows)

    def fit_predict(self, sequence, y=None, **kwargs) -> TrackingResult:
        return self.predict(sequence, **kwargs)


def _as_frame_map(sequence) -> dict[int, list[Detection]]:
    if isinstance(sequence, Mapping):
        return {int(f): list(d) for f, d in sequence.items()}
    return {i + 1: list(d) for i, d in enumerate(sequence)}


def run_sequence(detections, provider=None, config: Optional[TrackerConfig] = None,
                 num_frames: Optional[int] = None, images: Optional[ImageSource] = None,
                 interpolate: bool = False) -> TrackingResult:
    """Track one sequence with a fresh tracker; optionally interpolate gaps."""
    config = config or TrackerConfig()
    result = MixSortTracker.from_config(config, provider).predict(detections, num_frames=num_frames, images=images)
    if interpolate:
        result = linear_interpolation(result, config.interp_max_gap)
    return result


def linear_interpolation(result: TrackingResult, max_gap: int = 20) -> TrackingResult:
    """Fill runs of at most ``max_gap`` missing frames inside each track.

    Boxes (left, top, width, height) and scores are interpolated linearly;
    inserted rows are flagged ``interpolated``. Existing rows are untouched.
    """
    if max_gap < 0:
        raise ContractViolation(f"max_gap must be >= 0, got {max_gap}")
    rows = list(result.rows)
    if max_gap == 0:
        return TrackingResult(rows)
    for track_rows in result.by_track().values():
        for a, b in zip(track_rows, track_rows[1:]):
            missing = b.frame - a.frame - 1
            if missing < 1 or missing > max_gap:
                continue
            pa = np.array(a.box.as_tuple())
            pb = np.array(b.box.as_tuple())
            for f in range(a.frame + 1, b.frame):
                w = (f - a.frame) / (b.frame - a.frame)
                box = BoundingBox(*(pa + (pb - pa) * w))
                score = a.score + (b.score - a.score) * w
                rows.append(TrackRow(f, a.track_id, box, score, interpolated=True))
    return TrackingResult(rows)


class LinearInterpolator(TransformerMixin, BaseEstimator):
    """Transformer wrapper around :func:`linear_interpolation`."""

    def __init__(self, max_gap=20):
        self.max_gap = max_gap

    def fit(self, X=None, y=None):
        if self.max_gap < 0:
            raise ConfigError(f"max_gap must be >= 0, got {self.max_gap}")
        return self

    def transform(self, X: TrackingResult) -> TrackingResult:
        return linear_interpolation(X, self.max_gap)
