"""Synthetic capture-quality artifacts and the score-vs-level sweep harness.

Four transforms model degraded driving footage: global brightening,
darkening, fog (haze blend plus a mild brightness lift), and horizontal
motion blur standing in for vehicle speed. Every transform at level 0 is a
byte-identical identity, and all preserve image dimensions.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .detections import DetectionSet
from .errors import PqiError
from .images import RgbImage, to_grayscale
from .saliency import SaliencyParams, fine_grained_saliency
from .scoring import compute_pqi

FOG_HAZE_RGB = (200.0, 200.0, 200.0)
FOG_LIFT_PER_LEVEL = 0.1
BLUR_KERNEL_SPAN = 14  # kernel length ranges 1..15 before odd-forcing

DEFAULT_LEVELS: tuple[float, ...] = tuple(i / 10 for i in range(11))


class ArtifactKind(enum.Enum):
    BRIGHTNESS = "brightness"
    DARKNESS = "darkness"
    FOG = "fog"
    SPEED = "speed"


@dataclass(frozen=True)
class SweepResult:
    """Mean score per artifact level, averaged over an image set."""

    kind: ArtifactKind
    levels: tuple[float, ...]
    mean_pqi: tuple[float, ...]
    n_images: tuple[int, ...]
    excluded: int = 0

    def __post_init__(self) -> None:
        if len(self.levels) != len(self.mean_pqi) or len(self.levels) != len(
            self.n_images
        ):
            raise ValueError("levels, mean_pqi, n_images must align")
        for lo, hi in zip(self.levels, self.levels[1:]):
            if not lo < hi:
                raise ValueError("levels must be strictly increasing")
        for lv in self.levels:
            if not 0.0 <= lv <= 1.0:
                raise ValueError("levels must lie in [0, 1]")


def _check_level(level: float) -> float:
    level = float(level)
    if not 0.0 <= level <= 1.0:
        raise ValueError(f"artifact level must be in [0, 1], got {level}")
    return level


def _quantize(values: np.ndarray) -> np.ndarray:
    """Half-up rounding to the uint8 range."""
    return np.clip(np.floor(values + 0.5), 0.0, 255.0).astype(np.uint8)


def apply_brightness(img: RgbImage, level: float) -> RgbImage:
    """Scale the HSV value channel by (1 + level), clamping at white.

    Scaling all three channels of a pixel by one gain scales its max (the
    HSV value) by that gain and leaves hue and saturation untouched, so the
    clamp folds into a per-pixel gain of min(1 + level, 255 / value).
    """
    level = _check_level(level)
    arr = img.data.astype(np.float64)
    value = arr.max(axis=2)
    gain = np.minimum(1.0 + level, 255.0 / np.maximum(value, 1.0))
    return RgbImage(_quantize(arr * gain[:, :, None]))


def apply_darkness(img: RgbImage, level: float) -> RgbImage:
    """Scale the HSV value channel by (1 - level); level 1 yields black."""
    level = _check_level(level)
    return RgbImage(_quantize(img.data.astype(np.float64) * (1.0 - level)))


def apply_fog(img: RgbImage, level: float) -> RgbImage:
    """Blend toward a light-gray haze, then lift brightness slightly.

    out = ((1 - level) * rgb + level * haze) * (1 + 0.1 * level). The lift
    mimics airlight scattering; contrast still strictly decreases with
    level because (1 - L)(1 + 0.1 L) is decreasing on [0, 1].
    """
    level = _check_level(level)
    arr = img.data.astype(np.float64)
    haze = np.array(FOG_HAZE_RGB, dtype=np.float64)
    blended = (1.0 - level) * arr + level * haze
    return RgbImage(_quantize(blended * (1.0 + FOG_LIFT_PER_LEVEL * level)))


def blur_kernel_length(level: float) -> int:
    """Odd kernel length 1 + round(level * 14), half-up, even bumped by 1."""
    level = _check_level(level)
    length = 1 + int(math.floor(level * BLUR_KERNEL_SPAN + 0.5))
    if length % 2 == 0:
        length += 1
    return length


def apply_speed_blur(img: RgbImage, level: float) -> RgbImage:
    """Horizontal box blur with border-replicate padding.

    Window sums are exact integers (cumulative sums of uint8 rows), so the
    result is independent of summation order; the mean is rounded half-up.
    """
    length = blur_kernel_length(level)
    if length == 1:
        return RgbImage(img.data.copy())
    radius = (length - 1) // 2
    padded = np.pad(
        img.data.astype(np.int64), ((0, 0), (radius, radius), (0, 0)), mode="edge"
    )
    cs = np.concatenate(
        [np.zeros((padded.shape[0], 1, 3), dtype=np.int64), np.cumsum(padded, axis=1)],
        axis=1,
    )
    window_sums = cs[:, length:, :] - cs[:, :-length, :]
    return RgbImage(_quantize(window_sums / length))


_TRANSFORMS = {
    ArtifactKind.BRIGHTNESS: apply_brightness,
    ArtifactKind.DARKNESS: apply_darkness,
    ArtifactKind.FOG: apply_fog,
    ArtifactKind.SPEED: apply_speed_blur,
}


def apply_artifact(img: RgbImage, kind: ArtifactKind, level: float) -> RgbImage:
    return _TRANSFORMS[kind](img, level)


def _empty_detections() -> DetectionSet:
    return DetectionSet(image_id="", detections=())


def sweep(
    images: Sequence[RgbImage],
    kind: ArtifactKind,
    levels: Sequence[float] = DEFAULT_LEVELS,
    params: SaliencyParams = SaliencyParams(),
    detections: Sequence[DetectionSet | None] | None = None,
    jobs: int = 1,
) -> SweepResult:
    """Score every image at every artifact level and average per level.

    Detection boxes are held fixed across levels: the sweep isolates what
    the artifact does to the pixels, not to the detector. Per-image
    failures are excluded from the average and counted. Aggregation order
    is fixed by task index, so results do not depend on the thread count.
    """
    if len(images) == 0:
        raise ValueError("sweep needs at least one image")
    if len(levels) == 0:
        raise ValueError("sweep needs at least one level")
    if detections is not None and len(detections) != len(images):
        raise ValueError("detections must align with images")

    level_list = tuple(float(lv) for lv in levels)
    tasks = [
        (img_idx, level_idx)
        for img_idx in range(len(images))
        for level_idx in range(len(level_list))
    ]

    def run(task: tuple[int, int]) -> float | None:
        img_idx, level_idx = task
        ds = detections[img_idx] if detections is not None else None
        try:
            transformed = apply_artifact(images[img_idx], kind, level_list[level_idx])
            sm = fine_grained_saliency(to_grayscale(transformed), params)
            return compute_pqi(sm, ds if ds is not None else _empty_detections()).value
        except PqiError:
            return None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]

    sums = [0.0] * len(level_list)
    counts = [0] * len(level_list)
    excluded = 0
    for (_, level_idx), value in zip(tasks, results):
        if value is None:
            excluded += 1
        else:
            sums[level_idx] += value
            counts[level_idx] += 1

    means = tuple(
        sums[i] / counts[i] if counts[i] else float("nan")
        for i in range(len(level_list))
    )
    return SweepResult(
        kind=kind,
        levels=level_list,
        mean_pqi=means,
        n_images=tuple(counts),
        excluded=excluded,
    )
