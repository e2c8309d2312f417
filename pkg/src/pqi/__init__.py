"""Perception quality scoring for camera-based object detection.

The core score is the mean of a fine-grained saliency map plus
confidence-weighted box contributions from a detector, computed on raw
unnormalized intensities. Supporting pieces: exact integral-image sums,
detection ingestion, synthetic artifact sweeps, SLIC superpixel features,
a hand-built two-branch attention regressor, and regression metrics.
"""

from .augment import (
    DEFAULT_LEVELS,
    ArtifactKind,
    SweepResult,
    apply_artifact,
    apply_brightness,
    apply_darkness,
    apply_fog,
    apply_speed_blur,
    sweep,
)
from .detections import (
    DEFAULT_CONFIDENCE_THRESHOLD,
    Detection,
    DetectionLoadResult,
    DetectionSet,
    filter_detections,
    load_detections,
    save_detections,
)
from .errors import DataError, DecodeError, NumericalError, PqiError
from .images import (
    GrayImage,
    IntegralImage,
    Rect,
    RgbImage,
    build_integral,
    integral_array,
    load_image,
    rect_sum,
    save_png,
    to_grayscale,
)
from .metrics import PairedScores, average_ranks, plcc, r_squared, srcc
from .saliency import (
    SaliencyMap,
    SaliencyParams,
    fine_grained_saliency,
    load_map_binary,
    save_map_binary,
    save_map_png,
    submap,
)
from .scoring import (
    PqiDistribution,
    PqiScore,
    compute_pqi,
    object_saliency_term,
    pqi_distribution,
)
from .superpixels import (
    SuperpixelFeatures,
    SuperpixelSegmentation,
    SuperpixelTokens,
    extract_features,
    pad_or_truncate,
    rgb_to_lab,
    save_label_png,
    slic,
)

__version__ = "0.1.0"

__all__ = [
    "ArtifactKind",
    "DEFAULT_CONFIDENCE_THRESHOLD",
    "DEFAULT_LEVELS",
    "DataError",
    "DecodeError",
    "Detection",
    "DetectionLoadResult",
    "DetectionSet",
    "GrayImage",
    "IntegralImage",
    "NumericalError",
    "PairedScores",
    "PqiDistribution",
    "PqiError",
    "PqiScore",
    "Rect",
    "RgbImage",
    "SaliencyMap",
    "SaliencyParams",
    "SuperpixelFeatures",
    "SuperpixelSegmentation",
    "SuperpixelTokens",
    "SweepResult",
    "apply_artifact",
    "apply_brightness",
    "apply_darkness",
    "apply_fog",
    "apply_speed_blur",
    "average_ranks",
    "build_integral",
    "compute_pqi",
    "extract_features",
    "filter_detections",
    "fine_grained_saliency",
    "integral_array",
    "load_detections",
    "load_image",
    "load_map_binary",
    "object_saliency_term",
    "pad_or_truncate",
    "plcc",
    "pqi_distribution",
    "r_squared",
    "rect_sum",
    "rgb_to_lab",
    "save_detections",
    "save_label_png",
    "save_map_binary",
    "save_map_png",
    "save_png",
    "slic",
    "srcc",
    "submap",
    "sweep",
    "to_grayscale",
]
