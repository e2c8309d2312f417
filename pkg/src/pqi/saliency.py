"""Fine-grained center-surround saliency maps.

A pixel's response at window radius ``zeta`` is its own intensity minus the
mean intensity of the surrounding window (center excluded), clamped at zero.
The full map sums those responses over a geometric ladder of radii
``zeta = sigma * 2**s``. Window means come from a summed-area table, so the
cost per radius is independent of the radius.

Border policy: windows are clamped to the image and divided by the actual
pixel count minus one. The printed interior denominator ``(2*zeta+1)**2 - 1``
is the special case of a fully inside window.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .images import GrayImage, IntegralImage, Rect, build_integral, rect_sum, save_png

_MAP_MAGIC = b"PQISMAP1"


@dataclass(frozen=True)
class SaliencyParams:
    """Radius ladder: base radius ``sigma`` doubled once per scale step."""

    sigma: int = 1
    scales: tuple[int, ...] = (0, 1, 2, 3, 4, 5)

    def __post_init__(self) -> None:
        if self.sigma < 1:
            raise ValueError("sigma must be >= 1")
        if not self.scales:
            raise ValueError("scales must be non-empty")
        if any(s < 0 for s in self.scales):
            raise ValueError("scale factors must be >= 0")

    def radii(self) -> tuple[int, ...]:
        return tuple(self.sigma * (1 << s) for s in self.scales)


@dataclass(frozen=True)
class SaliencyMap:
    """Per-pixel non-negative saliency intensities (float64)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        d = self.data
        if d.ndim != 2 or d.dtype != np.float64:
            raise ValueError("SaliencyMap.data must be a (H, W) float64 array")
        if d.size == 0:
            raise ValueError("saliency map must be non-empty")
        if np.any(d < 0):
            raise ValueError("saliency map entries must be >= 0")
        d.setflags(write=False)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def mean(self) -> float:
        return float(self.data.mean())


def center(img: GrayImage, x: int, y: int) -> float:
    """Center response: the pixel's own intensity."""
    return float(img.data[y, x])


def surround(ii: IntegralImage, x: int, y: int, zeta: int) -> float:
    """Mean intensity of the clamped window around (x, y), center excluded.

    A window that clamps down to the center pixel alone has no surround;
    its response is defined as 0.
    """
    if zeta < 1:
        raise ValueError("zeta must be >= 1")
    window = Rect(x - zeta, y - zeta, x + zeta, y + zeta)
    clamped = window.clamped(ii.width, ii.height)
    if clamped is None or clamped.area <= 1:
        return 0.0
    total = rect_sum(ii, clamped)
    center_value = rect_sum(ii, Rect(x, y, x, y))
    return (float(total) - float(center_value)) / (clamped.area - 1)


def _window_mean_excluding_center(gray: np.ndarray, zeta: int) -> np.ndarray:
    """Vectorized surround for every pixel at one radius."""
    h, w = gray.shape
    padded = np.zeros((h + 1, w + 1), dtype=np.float64)
    if np.issubdtype(gray.dtype, np.integer):
        # uint64 accumulation first; magnitudes stay far below 2**53 so the
        # float64 view of the table is still exact.
        table = np.cumsum(np.cumsum(gray.astype(np.uint64), axis=0), axis=1)
        padded[1:, 1:] = table.astype(np.float64)
    else:
        padded[1:, 1:] = np.cumsum(np.cumsum(gray.astype(np.float64), axis=0), axis=1)

    ys = np.arange(h)
    xs = np.arange(w)
    y0 = np.clip(ys - zeta, 0, None)
    y1 = np.clip(ys + zeta, None, h - 1)
    x0 = np.clip(xs - zeta, 0, None)
    x1 = np.clip(xs + zeta, None, w - 1)

    sums = (
        padded[np.ix_(y1 + 1, x1 + 1)]
        - padded[np.ix_(y0, x1 + 1)]
        - padded[np.ix_(y1 + 1, x0)]
        + padded[np.ix_(y0, x0)]
    )
    counts = (y1 - y0 + 1)[:, None] * (x1 - x0 + 1)[None, :]
    values = gray.astype(np.float64)
    out = np.zeros_like(values)
    valid = counts > 1
    np.divide(sums - values, counts - 1, out=out, where=valid)
    return out


def submap(img: GrayImage | np.ndarray, zeta: int) -> SaliencyMap:
    """Single-radius response map: max(center - surround, 0) per pixel."""
    if zeta < 1:
        raise ValueError("zeta must be >= 1")
    gray = img.data if isinstance(img, GrayImage) else np.asarray(img)
    s = _window_mean_excluding_center(gray, zeta)
    return SaliencyMap(np.maximum(gray.astype(np.float64) - s, 0.0))


def fine_grained_saliency(
    img: GrayImage | np.ndarray, params: SaliencyParams = SaliencyParams()
) -> SaliencyMap:
    """Element-wise sum of single-radius maps over the params' radius ladder.

    The result is not renormalized: map intensity scales with image
    brightness, which is what makes the downstream score sensitive to it.
    Raw float arrays are accepted for the real-valued test path.
    """
    gray = img.data if isinstance(img, GrayImage) else np.asarray(img)
    total = np.zeros(gray.shape, dtype=np.float64)
    for zeta in params.radii():
        total += submap(gray, zeta).data
    return SaliencyMap(total)


def save_map_png(sm: SaliencyMap, path: str | Path) -> None:
    """8-bit preview: linear rescale of [0, max] to [0, 255].

    The scale factor is recorded in a ``<path>.max.txt`` sidecar so the
    preview stays invertible up to quantization.
    """
    peak = float(sm.data.max())
    if peak > 0:
        scaled = np.floor(sm.data / peak * 255.0 + 0.5).astype(np.uint8)
    else:
        scaled = np.zeros(sm.data.shape, dtype=np.uint8)
    save_png(scaled, path)
    Path(f"{path}.max.txt").write_text(f"{peak!r}\n", encoding="utf-8")


def save_map_binary(sm: SaliencyMap, path: str | Path) -> None:
    """Raw map export: 16-byte header (magic, width, height) + float32 LE."""
    header = _MAP_MAGIC + struct.pack("<II", sm.width, sm.height)
    payload = sm.data.astype("<f4").tobytes(order="C")
    Path(path).write_bytes(header + payload)


def load_map_binary(path: str | Path) -> SaliencyMap:
    """Inverse of save_map_binary (float32 quantization preserved)."""
    blob = Path(path).read_bytes()
    if len(blob) < 16 or blob[:8] != _MAP_MAGIC:
        raise DataError(f"{path}: not a saliency map container")
    width, height = struct.unpack("<II", blob[8:16])
    expected = 16 + 4 * width * height
    if len(blob) != expected:
        raise DataError(f"{path}: truncated map: {len(blob)} != {expected} bytes")
    flat = np.frombuffer(blob, dtype="<f4", offset=16)
    return SaliencyMap(flat.reshape(height, width).astype(np.float64))
