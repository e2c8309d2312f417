"""The perception quality index itself.

A frame's score is the mean over all pixels of the saliency field plus, for
every detection, the detection's confidence times the saliency restricted
to its box. Overlapping boxes accumulate additively. Equivalently:

    score = mean(map) + sum_i(conf_i * box_sum_i) / pixel_count

which is the decomposition the tests pin down. Scores are reported on the
raw saliency intensity scale, unnormalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detections import Detection, DetectionSet
from .saliency import SaliencyMap


@dataclass(frozen=True)
class PqiScore:
    """Per-frame score plus how many detections contributed."""

    value: float
    image_id: str
    k_used: int


@dataclass(frozen=True)
class PqiDistribution:
    """Summary of a batch of scores: mean, population std, histogram."""

    mean: float
    std: float
    histogram: tuple[tuple[float, int], ...]
    n: int
    bucket_width: float


def object_saliency_term(sm: SaliencyMap, d: Detection) -> float:
    """One detection's contribution before the global mean:
    confidence times the saliency sum over its (clamped) box.
    """
    rect = d.pixel_rect(sm.width, sm.height)
    if rect is None:
        return 0.0
    region = sm.data[rect.y0 : rect.y1 + 1, rect.x0 : rect.x1 + 1]
    return d.confidence * float(region.sum())


def compute_pqi(sm: SaliencyMap, ds: DetectionSet) -> PqiScore:
    """Fuse the saliency map with detection-weighted object saliency.

    Detections whose boxes miss the map entirely do not count toward
    ``k_used``. Detection order never changes the result.
    """
    pixels = sm.width * sm.height
    object_total = 0.0
    k_used = 0
    for d in ds.detections:
        rect = d.pixel_rect(sm.width, sm.height)
        if rect is None:
            continue
        region = sm.data[rect.y0 : rect.y1 + 1, rect.x0 : rect.x1 + 1]
        object_total += d.confidence * float(region.sum())
        k_used += 1
    value = sm.mean() + object_total / pixels
    return PqiScore(value=value, image_id=ds.image_id, k_used=k_used)


def pqi_distribution(
    scores: list[PqiScore], bucket_width: float = 1.0
) -> PqiDistribution:
    """Sample mean, population std, and a fixed-width histogram of scores."""
    if not scores:
        raise ValueError("cannot summarize an empty score list")
    if bucket_width <= 0:
        raise ValueError("bucket_width must be > 0")
    values = np.array([s.value for s in scores], dtype=np.float64)
    mean = float(values.mean())
    std = float(values.std())  # population std

    start = math.floor(values.min() / bucket_width) * bucket_width
    idx = np.floor((values - start) / bucket_width).astype(int)
    counts = np.bincount(idx)
    histogram = tuple(
        (start + i * bucket_width, int(c)) for i, c in enumerate(counts)
    )
    return PqiDistribution(
        mean=mean,
        std=std,
        histogram=histogram,
        n=len(scores),
        bucket_width=bucket_width,
    )
