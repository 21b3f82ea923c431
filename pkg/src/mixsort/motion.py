"""Constant-velocity Kalman filter in (cx, cy, aspect, height) space.

All functions are pure: they take a :class:`KalmanState` and return a new one.
The observation-centric helpers (:func:`oc_reupdate`, :func:`ocm_direction_cost`)
back the ``OC`` base mode of the tracker.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .exceptions import KalmanError
from .geometry import BoundingBox

__all__ = [
    "MotionMode",
    "KalmanParams",
    "KalmanState",
    "box_to_xyah",
    "state_to_box",
    "kf_initiate",
    "kf_predict",
    "kf_update",
    "oc_reupdate",
    "ocm_direction_cost",
]

_NDIM = 4
_MIN_SIZE = 1e-3


class MotionMode(str, enum.Enum):
    NONE = "none"
    KALMAN = "kalman"
    KALMAN_OC = "kalman_oc"


@dataclass(frozen=True)
class KalmanParams:
    """Noise scales, as fractions of the box height."""

    std_weight_position: float = 1.0 / 20
    std_weight_velocity: float = 1.0 / 160
    std_aspect: float = 1e-2
    std_aspect_velocity: float = 1e-5
    std_aspect_measurement: float = 1e-1


DEFAULT_PARAMS = KalmanParams()

_F = np.eye(2 * _NDIM)
for _i in range(_NDIM):
    _F[_i, _NDIM + _i] = 1.0
_H = np.eye(_NDIM, 2 * _NDIM)


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray
    covariance: np.ndarray

    def to_box(self) -> BoundingBox:
        return state_to_box(self)


def box_to_xyah(box: BoundingBox) -> np.ndarray:
    cx, cy = box.center
    return np.array([cx, cy, box.width / box.height, box.height], dtype=float)


def state_to_box(state: KalmanState) -> BoundingBox:
    cx, cy, a, h = state.mean[:4]
    h = max(float(h), _MIN_SIZE)
    w = max(float(a) * h, _MIN_SIZE)
    return BoundingBox.from_center(float(cx), float(cy), w, h)


def kf_initiate(box: BoundingBox, params: KalmanParams = DEFAULT_PARAMS) -> KalmanState:
    measurement = box_to_xyah(box)
    mean = np.concatenate([measurement, np.zeros(_NDIM)])
    h = measurement[3]
    std = np.array([
        2 * params.std_weight_position * h,
        2 * params.std_weight_position * h,
        params.std_aspect,
        2 * params.std_weight_position * h,
        10 * params.std_weight_velocity * h,
        10 * params.std_weight_velocity * h,
        params.std_aspect_velocity,
        10 * params.std_weight_velocity * h,
    ])
    return KalmanState(mean, np.diag(std**2))


def kf_predict(state: KalmanState, params: KalmanParams = DEFAULT_PARAMS) -> KalmanState:
    h = state.mean[3]
    std = np.array([
        params.std_weight_position * h,
        params.std_weight_position * h,
        params.std_aspect,
        params.std_weight_position * h,
        params.std_weight_velocity * h,
        params.std_weight_velocity * h,
        params.std_aspect_velocity,
        params.std_weight_velocity * h,
    ])
    mean = _F @ state.mean
    cov = _F @ state.covariance @ _F.T + np.diag(std**2)
    return KalmanState(mean, (cov + cov.T) / 2.0)


def kf_update(state: KalmanState, observation: BoundingBox,
              params: KalmanParams = DEFAULT_PARAMS) -> KalmanState:
    """Kalman correction with a box observation.

    Raises :class:`KalmanError` when the innovation covariance is not
    positive definite.
    """
    h = state.mean[3]
    r = np.array([
        params.std_weight_position * h,
        params.std_weight_position * h,
        params.std_aspect_measurement,
        params.std_weight_position * h,
    ]) ** 2
    projected_mean = _H @ state.mean
    projected_cov = _H @ state.covariance @ _H.T + np.diag(r)
    try:
        chol = scipy.linalg.cho_factor(projected_cov, lower=True, check_finite=True)
        gain = scipy.linalg.cho_solve(chol, (state.covariance @ _H.T).T, check_finite=False).T
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise KalmanError(f"innovation covariance not invertible: {exc}") from exc
    innovation = box_to_xyah(observation) - projected_mean
    mean = state.mean + gain @ innovation
    # Joseph form keeps the posterior symmetric PSD
    ikh = np.eye(2 * _NDIM) - gain @ _H
    cov = ikh @ state.covariance @ ikh.T + gain @ np.diag(r) @ gain.T
    return KalmanState(mean, (cov + cov.T) / 2.0)


def oc_reupdate(state: KalmanState, last_obs: BoundingBox, new_obs: BoundingBox, gap: int,
                params: KalmanParams = DEFAULT_PARAMS) -> KalmanState:
    """Re-run the filter along a virtual linear path from ``last_obs`` to ``new_obs``.

    ``state`` is the posterior at the time ``last_obs`` was absorbed; ``gap``
    is the number of frames between the two observations. Each virtual step
    is one predict followed by an update with the interpolated box.
    """
    if gap < 1:
        raise ValueError(f"gap must be >= 1, got {gap}")
    a = np.array(last_obs.as_tuple())
    b = np.array(new_obs.as_tuple())
    for k in range(1, gap + 1):
        state = kf_predict(state, params)
        if k == gap:
            virtual = new_obs
        else:
            virtual = BoundingBox(*(a + (b - a) * (k / gap)))
        state = kf_update(state, virtual, params)
    return state


def ocm_direction_cost(track_history: Sequence[BoundingBox], det: BoundingBox, delta: int = 3) -> float:
    """Angle between the track's recent heading and the step towards ``det``, over pi.

    The heading is taken from the box ``delta`` observations back (or the
    oldest available) to the latest one.
    """
    if len(track_history) < 2:
        return 0.0
    back = min(delta, len(track_history) - 1)
    p0 = np.array(track_history[-1 - back].center)
    p1 = np.array(track_history[-1].center)
    heading = p1 - p0
    step = np.array(det.center) - p1
    n1, n2 = np.linalg.norm(heading), np.linalg.norm(step)
    if n1 < 1e-12 or n2 < 1e-12:
        return 0.0
    cos = float(np.clip(heading @ step / (n1 * n2), -1.0, 1.0))
    return float(np.arccos(cos) / np.pi)
