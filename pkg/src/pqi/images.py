"""Pixel containers, grayscale conversion, and summed-area-table primitives.

All containers are immutable after construction and every operation is a
pure function, so everything here is safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError

# ITU-R BT.601 luma weights.
LUMA_R = 0.299
LUMA_G = 0.587
LUMA_B = 0.114

# PIL modes whose channels are 8-bit; everything else is rejected.
_EIGHT_BIT_MODES = {"L", "LA", "P", "RGB", "RGBA"}


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle with inclusive pixel coordinates."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self) -> None:
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ValueError(f"degenerate rect: {self}")

    @property
    def area(self) -> int:
        return (self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)

    def clamped(self, width: int, height: int) -> "Rect | None":
        """Intersect with the image bounds; None when nothing overlaps."""
        x0 = max(self.x0, 0)
        y0 = max(self.y0, 0)
        x1 = min(self.x1, width - 1)
        y1 = min(self.y1, height - 1)
        if x0 > x1 or y0 > y1:
            return None
        return Rect(x0, y0, x1, y1)


@dataclass(frozen=True)
class RgbImage:
    """Dense 8-bit RGB image; data is a (height, width, 3) uint8 array."""

    data: np.ndarray

    def __post_init__(self) -> None:
        d = self.data
        if d.ndim != 3 or d.shape[2] != 3 or d.dtype != np.uint8:
            raise ValueError("RgbImage.data must be a (H, W, 3) uint8 array")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        d.setflags(write=False)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class GrayImage:
    """Dense 8-bit intensity image; data is a (height, width) uint8 array."""

    data: np.ndarray

    def __post_init__(self) -> None:
        d = self.data
        if d.ndim != 2 or d.dtype != np.uint8:
            raise ValueError("GrayImage.data must be a (H, W) uint8 array")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        d.setflags(write=False)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class IntegralImage:
    """Summed-area table: entry (x, y) is the sum over (0,0)..(x,y) inclusive.

    Accumulation stays in 64-bit integers for 8-bit sources, so rectangle
    sums are exact; a float64 variant exists for real-valued test paths.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        d = self.data
        if d.ndim != 2 or d.dtype not in (np.uint64, np.float64):
            raise ValueError("IntegralImage.data must be (H, W) uint64 or float64")
        d.setflags(write=False)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


def to_grayscale(img: RgbImage) -> GrayImage:
    """BT.601 luma conversion: round(0.299 R + 0.587 G + 0.114 B).

    Total function; output is clamped to [0, 255]. Equal input channels map
    to that same value.
    """
    rgb = img.data.astype(np.float64)
    luma = LUMA_R * rgb[:, :, 0] + LUMA_G * rgb[:, :, 1] + LUMA_B * rgb[:, :, 2]
    # Half-up rounding keeps the mapping monotone per channel.
    out = np.clip(np.floor(luma + 0.5), 0.0, 255.0).astype(np.uint8)
    return GrayImage(out)


def integral_array(values: np.ndarray) -> np.ndarray:
    """Cumulative row+column sums of a 2-D array.

    Integer inputs accumulate in uint64 (exact); float inputs in float64.
    """
    if values.ndim != 2:
        raise ValueError("expected a 2-D array")
    if np.issubdtype(values.dtype, np.integer):
        acc = values.astype(np.uint64)
    else:
        acc = values.astype(np.float64)
    return np.cumsum(np.cumsum(acc, axis=0), axis=1)


def build_integral(img: GrayImage | np.ndarray) -> IntegralImage:
    """Summed-area table of an intensity image.

    Accepts a GrayImage or a raw 2-D array (the real-valued test path).
    """
    values = img.data if isinstance(img, GrayImage) else np.asarray(img)
    return IntegralImage(integral_array(values))


def rect_sum(ii: IntegralImage, r: Rect) -> float:
    """Sum of source intensities over ``r`` via 4-corner inclusion-exclusion.

    The rect is clamped to the image bounds first; a rect that clamps to
    nothing sums to 0. Exact for integer-built tables (Python ints carry
    the corner arithmetic, so there is no unsigned wrap-around).
    """
    c = r.clamped(ii.width, ii.height)
    if c is None:
        return 0
    d = ii.data
    total = d[c.y1, c.x1].item()
    if c.x0 > 0:
        total -= d[c.y1, c.x0 - 1].item()
    if c.y0 > 0:
        total -= d[c.y0 - 1, c.x1].item()
    if c.x0 > 0 and c.y0 > 0:
        total += d[c.y0 - 1, c.x0 - 1].item()
    return total


def load_image(path: str | Path) -> RgbImage:
    """Decode a PNG or JPEG file to an 8-bit RgbImage.

    Images with non-8-bit channels (16-bit PNG, float TIFF, ...) are
    rejected with a DecodeError rather than silently rescaled.
    """
    try:
        with Image.open(path) as im:
            if im.mode not in _EIGHT_BIT_MODES:
                raise DecodeError(
                    f"{path}: mode {im.mode!r} is not 8-bit RGB-compatible"
                )
            rgb = im.convert("RGB")
            data = np.asarray(rgb, dtype=np.uint8)
    except FileNotFoundError:
        raise
    except UnidentifiedImageError as exc:
        raise DecodeError(f"{path}: not a decodable image: {exc}") from exc
    except OSError as exc:
        raise DecodeError(f"{path}: decode failed: {exc}") from exc
    return RgbImage(data.copy())


def save_png(data: np.ndarray, path: str | Path) -> None:
    """Write an array as PNG: (H,W) uint8, (H,W) uint16, or (H,W,3) uint8."""
    if data.ndim == 2 and data.dtype == np.uint8:
        im = Image.fromarray(data, mode="L")
    elif data.ndim == 2 and data.dtype == np.uint16:
        im = Image.fromarray(data.astype(np.int32), mode="I").convert("I;16")
    elif data.ndim == 3 and data.shape[2] == 3 and data.dtype == np.uint8:
        im = Image.fromarray(data, mode="RGB")
    else:
        raise ValueError(f"unsupported array for PNG export: {data.dtype} {data.shape}")
    im.save(path, format="PNG")
