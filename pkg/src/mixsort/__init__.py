"""MixSort: multi-object tracking with fused IoU and visual similarity.

The package bundles the tracker, the MOT evaluation metrics, MOTChallenge
file I/O with motion statistics, and a synthetic sequence generator.
"""

__version__ = "0.1.0"

from .appearance import (
    HistogramProvider,
    NullProvider,
    OracleProvider,
    SearchRegion,
    Template,
    focal_loss,
    focal_loss_gradient,
    gaussian_target,
)
from .association import SimilarityMatrix, byte_associate, fuse, linear_assignment, solve_assignment
from .exceptions import ConfigError, ContractViolation, DatasetFormatError, KalmanError, MixSortError
from .geometry import BoundingBox, Detection, iou, iou_matrix
from .metrics import MetricsReport, aggregate, evaluate
from .motion import KalmanState, MotionMode
from .tracker import (
    LinearInterpolator,
    MixSortTracker,
    TrackerConfig,
    TrackingResult,
    TrackRow,
    TrackState,
    linear_interpolation,
    run_sequence,
)

__all__ = [
    "BoundingBox",
    "ConfigError",
    "ContractViolation",
    "DatasetFormatError",
    "Detection",
    "HistogramProvider",
    "KalmanError",
    "KalmanState",
    "LinearInterpolator",
    "MetricsReport",
    "MixSortError",
    "MixSortTracker",
    "MotionMode",
    "NullProvider",
    "OracleProvider",
    "SearchRegion",
    "SimilarityMatrix",
    "Template",
    "TrackRow",
    "TrackState",
    "TrackerConfig",
    "TrackingResult",
    "aggregate",
    "byte_associate",
    "evaluate",
    "focal_loss",
    "focal_loss_gradient",
    "fuse",
    "gaussian_target",
    "iou",
    "iou_matrix",
    "linear_assignment",
    "linear_interpolation",
    "run_sequence",
    "solve_assignment",
]
