"""Ingestion of externally produced object-detection results.

The detector runs upstream; this module only parses its output and applies
the confidence threshold. File format is JSON Lines, one record per
detection:

    {"image_id": "a", "x0": 10, "y0": 10, "x1": 50, "y1": 50,
     "class_id": 2, "confidence": 0.9}

An optional first line ``{"coords": "absolute"}`` or
``{"coords": "normalized"}`` declares the box coordinate convention for the
whole file (default: absolute). Absolute coordinates are inclusive pixel
indices; normalized coordinates live in [0, 1] and map to pixels via
``round(v * (size - 1))``. Detections are assumed post-NMS.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError
from .images import Rect

DEFAULT_CONFIDENCE_THRESHOLD = 0.4

_REQUIRED_FIELDS = ("image_id", "x0", "y0", "x1", "y1", "class_id", "confidence")


@dataclass(frozen=True)
class Detection:
    """One detected object: box, class label, confidence in [0, 1]."""

    x0: float
    y0: float
    x1: float
    y1: float
    class_id: int
    confidence: float
    normalized: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ValueError("box must satisfy x0 <= x1 and y0 <= y1")

    def pixel_rect(self, width: int, height: int) -> Rect | None:
        """Box as an inclusive pixel Rect, clamped to the image.

        Returns None when the box misses the image entirely.
        """
        if self.normalized:
            x0 = round(self.x0 * (width - 1))
            x1 = round(self.x1 * (width - 1))
            y0 = round(self.y0 * (height - 1))
            y1 = round(self.y1 * (height - 1))
        else:
            x0, y0 = round(self.x0), round(self.y0)
            x1, y1 = round(self.x1), round(self.y1)
        if x1 < 0 or y1 < 0 or x0 > width - 1 or y0 > height - 1:
            return None
        return Rect(x0, y0, x1, y1).clamped(width, height)


@dataclass(frozen=True)
class DetectionSet:
    """All detections for one image, in file order."""

    image_id: str
    detections: tuple[Detection, ...] = ()

    @property
    def k(self) -> int:
        return len(self.detections)


@dataclass
class DetectionLoadResult:
    """Parsed detection file: per-image sets plus a malformed-record count."""

    by_image: dict[str, DetectionSet] = field(default_factory=dict)
    warnings: int = 0
    coords: str = "absolute"


def _parse_record(obj: object, normalized: bool) -> tuple[str, Detection] | None:
    if not isinstance(obj, dict):
        return None
    if any(k not in obj for k in _REQUIRED_FIELDS):
        return None
    image_id = obj["image_id"]
    if not isinstance(image_id, str) or not image_id:
        return None
    try:
        x0, y0 = float(obj["x0"]), float(obj["y0"])
        x1, y1 = float(obj["x1"]), float(obj["y1"])
        confidence = float(obj["confidence"])
        class_id = int(obj["class_id"])
    except (TypeError, ValueError):
        return None
    coords = (x0, y0, x1, y1)
    if not all(math.isfinite(v) for v in (*coords, confidence)):
        return None
    if not 0.0 <= confidence <= 1.0:
        return None
    if x0 > x1 or y0 > y1:
        return None
    if normalized:
        if any(v < 0.0 or v > 1.0 for v in coords):
            return None
    elif any(v < 0.0 for v in coords):
        return None
    det = Detection(x0, y0, x1, y1, class_id, confidence, normalized=normalized)
    return image_id, det


def load_detections(path: str | Path) -> DetectionLoadResult:
    """Parse a JSONL detection file.

    Malformed records (bad JSON, missing fields, out-of-range values) are
    skipped and counted; an unreadable file is a hard DataError.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: cannot read detections: {exc}") from exc

    lines = [ln for ln in text.splitlines() if ln.strip()]
    coords = "absolute"
    start = 0
    if lines:
        try:
            head = json.loads(lines[0])
        except json.JSONDecodeError:
            head = None
        if isinstance(head, dict) and set(head) == {"coords"}:
            if head["coords"] not in ("absolute", "normalized"):
                raise DataError(f"{path}: unknown coords mode {head['coords']!r}")
            coords = head["coords"]
            start = 1

    result = DetectionLoadResult(coords=coords)
    normalized = coords == "normalized"
    grouped: dict[str, list[Detection]] = {}
    for line in lines[start:]:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            result.warnings += 1
            continue
        parsed = _parse_record(obj, normalized)
        if parsed is None:
            result.warnings += 1
            continue
        image_id, det = parsed
        grouped.setdefault(image_id, []).append(det)

    result.by_image = {
        image_id: DetectionSet(image_id, tuple(dets))
        for image_id, dets in grouped.items()
    }
    return result


def save_detections(
    path: str | Path, sets: list[DetectionSet], coords: str = "absolute"
) -> None:
    """Serialize detection sets back to the JSONL schema (round-trip safe)."""
    if coords not in ("absolute", "normalized"):
        raise ValueError(f"unknown coords mode {coords!r}")
    lines = [json.dumps({"coords": coords})]
    for ds in sets:
        for d in ds.detections:
            lines.append(
                json.dumps(
                    {
                        "image_id": ds.image_id,
                        "x0": d.x0,
                        "y0": d.y0,
                        "x1": d.x1,
                        "y1": d.y1,
                        "class_id": d.class_id,
                        "confidence": d.confidence,
                    }
                )
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def filter_detections(
    ds: DetectionSet, conf_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD
) -> DetectionSet:
    """Keep detections with confidence >= threshold, preserving order."""
    if not 0.0 <= conf_threshold <= 1.0:
        raise ValueError("conf_threshold must be in [0, 1]")
    kept = tuple(d for d in ds.detections if d.confidence >= conf_threshold)
    return DetectionSet(ds.image_id, kept)
