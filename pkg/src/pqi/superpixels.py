"""SLIC superpixel segmentation and per-segment appearance features.

Clustering runs in (L, a, b, x, y) space with grid seeding, a fixed
iteration count, and a connectivity pass that absorbs stray fragments into
the largest adjacent segment, so results are fully deterministic. Feature
extraction stays in RGB: per segment channel mean and population std
(channels scaled to [0, 1]), plus size and centroid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .images import RgbImage, save_png

DEFAULT_K = 500
DEFAULT_COMPACTNESS = 10.0
DEFAULT_ITERS = 10

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class SuperpixelSegmentation:
    """Dense label map: every pixel carries a segment id in [0, k_actual)."""

    labels: np.ndarray
    k_actual: int
    compactness: float

    def __post_init__(self) -> None:
        labels = np.ascontiguousarray(self.labels, dtype=np.int32)
        if labels.ndim != 2:
            raise ValueError("labels must be a 2-D map")
        counts = np.bincount(labels.ravel(), minlength=self.k_actual)
        if labels.min() < 0 or labels.max() >= self.k_actual:
            raise ValueError("labels must lie in [0, k_actual)")
        if counts.size != self.k_actual or np.any(counts == 0):
            raise ValueError("every segment id must be used at least once")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class SuperpixelFeatures:
    """Per-segment RGB statistics and geometry, rows aligned to segment id.

    rgb_mean and rgb_std are (k, 3) in [0, 1]; sizes is (k,) pixel counts
    summing to width*height; centroids is (k, 2) mean (x, y) pixel coords.
    """

    rgb_mean: np.ndarray
    rgb_std: np.ndarray
    sizes: np.ndarray
    centroids: np.ndarray
    width: int
    height: int

    @property
    def k_actual(self) -> int:
        return self.sizes.shape[0]


@dataclass(frozen=True)
class SuperpixelTokens:
    """Fixed-row feature block for a consumer that needs k_fixed segments.

    features is (k_fixed, 6): channel means then channel stds. geometry is
    (k_fixed, 3): size / (width*height), cx / max(width-1, 1),
    cy / max(height-1, 1). mask flags the rows that hold real segments;
    padded rows are zero.
    """

    features: np.ndarray
    geometry: np.ndarray
    mask: np.ndarray

    @property
    def k_fixed(self) -> int:
        return self.mask.shape[0]


def rgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """sRGB uint8 (H, W, 3) to CIE Lab under the D65 white point."""
    c = rgb.astype(np.float64) / 255.0
    linear = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    matrix = np.array(
        [
            [0.4124564, 0.3575761, 0.1804375],
            [0.2126729, 0.7151522, 0.0721750],
            [0.0193339, 0.1191920, 0.9503041],
        ]
    )
    xyz = linear @ matrix.T
    xyz /= np.array([0.95047, 1.0, 1.08883])
    delta = 6.0 / 29.0
    f = np.where(
        xyz > delta**3, np.cbrt(xyz), xyz / (3.0 * delta**2) + 4.0 / 29.0
    )
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def _seed_grid(width: int, height: int, k_target: int) -> tuple[int, int]:
    """Pick (nx, ny) seed counts whose product best approximates k_target.

    Exhaustive over nx (at most k_target candidates); the closest product
    wins, with ties preferring squarer cells.
    """
    best: tuple[float, float, int, int] | None = None
    for nx in range(1, min(width, k_target) + 1):
        for ny_base in (k_target // nx, k_target // nx + 1):
            ny = min(max(1, ny_base), height)
            gap = abs(nx * ny - k_target)
            squareness = abs(width / nx - height / ny)
            key = (gap, squareness, nx, ny)
            if best is None or key < best:
                best = key
    assert best is not None
    return best[2], best[3]


def slic(
    img: RgbImage,
    k_target: int = DEFAULT_K,
    compactness: float = DEFAULT_COMPACTNESS,
    iters: int = DEFAULT_ITERS,
) -> SuperpixelSegmentation:
    """Grid-seeded k-means over (L, a, b, x, y) plus connectivity repair.

    The spatial term is weighted by (compactness / S)^2 where S is the
    seed spacing, matching the classic SLIC distance. Each assignment pass
    searches a +/-S window around the cluster center; pixels outside every
    window keep their previous label. k_actual lands within about 20% of
    k_target because seeds start on a near-regular grid and the repair
    pass never removes a cluster's largest fragment.
    """
    height, width = img.height, img.width
    n_pixels = height * width
    if k_target < 1 or iters < 1:
        raise ValueError("k_target and iters must be >= 1")
    if k_target > n_pixels:
        raise ValueError("k_target exceeds the pixel count")

    lab = rgb_to_lab(img.data)
    nx, ny = _seed_grid(width, height, k_target)
    k = nx * ny
    spacing = math.sqrt(n_pixels / k)
    window = max(1, int(math.ceil(spacing)))
    spatial_w = (compactness / spacing) ** 2

    xs, ys = np.meshgrid(
        np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64)
    )
    seed_x = np.floor((np.arange(nx) + 0.5) * width / nx).astype(int)
    seed_y = np.floor((np.arange(ny) + 0.5) * height / ny).astype(int)
    centers = np.empty((k, 5), dtype=np.float64)
    for gy in range(ny):
        for gx in range(nx):
            ci = gy * nx + gx
            centers[ci, :3] = lab[seed_y[gy], seed_x[gx]]
            centers[ci, 3] = seed_x[gx]
            centers[ci, 4] = seed_y[gy]

    # Initial assignment by seed grid cell keeps every pixel labeled even
    # where search windows would not reach on the first pass.
    cell_x = np.minimum((xs * nx / width).astype(int), nx - 1)
    cell_y = np.minimum((ys * ny / height).astype(int), ny - 1)
    labels = (cell_y * nx + cell_x).astype(np.int32)

    for _ in range(iters):
        dist = np.full((height, width), np.inf)
        new_labels = labels.copy()
        for ci in range(k):
            cx, cy = centers[ci, 3], centers[ci, 4]
            x0 = max(int(cx) - window, 0)
            x1 = min(int(cx) + window + 1, width)
            y0 = max(int(cy) - window, 0)
            y1 = min(int(cy) + window + 1, height)
            if x0 >= x1 or y0 >= y1:
                continue
            d_lab = lab[y0:y1, x0:x1] - centers[ci, :3]
            d2 = (d_lab * d_lab).sum(axis=2) + spatial_w * (
                (xs[y0:y1, x0:x1] - cx) ** 2 + (ys[y0:y1, x0:x1] - cy) ** 2
            )
            better = d2 < dist[y0:y1, x0:x1]
            dist[y0:y1, x0:x1][better] = d2[better]
            new_labels[y0:y1, x0:x1][better] = ci
        labels = new_labels

        flat = labels.ravel()
        counts = np.bincount(flat, minlength=k).astype(np.float64)
        occupied = counts > 0
        for dim, values in enumerate((lab[..., 0], lab[..., 1], lab[..., 2], xs, ys)):
            sums = np.bincount(flat, weights=values.ravel(), minlength=k)
            centers[occupied, dim] = sums[occupied] / counts[occupied]

    labels = _compact_labels(labels)
    labels = _enforce_connectivity(labels)
    k_actual = int(labels.max()) + 1
    return SuperpixelSegmentation(
        labels=labels, k_actual=k_actual, compactness=float(compactness)
    )


def _compact_labels(labels: np.ndarray) -> np.ndarray:
    """Renumber so used ids form 0..m-1 in ascending original order."""
    used = np.unique(labels)
    remap = np.zeros(used.max() + 1, dtype=np.int32)
    remap[used] = np.arange(used.size, dtype=np.int32)
    return remap[labels]


def _enforce_connectivity(labels: np.ndarray) -> np.ndarray:
    """Absorb non-largest 4-connected fragments into adjacent segments.

    Each label keeps its largest fragment. Remaining fragments merge, in
    deterministic order, into the largest segment that is 4-adjacent
    through already-resolved pixels; the resolved region of every label
    stays 4-connected throughout, so the output segments are connected.
    """
    height, width = labels.shape
    k = int(labels.max()) + 1
    final = labels.copy()
    resolved = np.zeros((height, width), dtype=bool)
    pending: list[tuple[np.ndarray, np.ndarray]] = []

    for lbl in range(k):
        mask = labels == lbl
        comp, ncomp = ndimage.label(mask, structure=_FOUR_CONNECTED)
        if ncomp <= 1:
            resolved |= mask
            continue
        sizes = np.bincount(comp.ravel())[1:]
        keeper = int(np.argmax(sizes)) + 1
        resolved |= comp == keeper
        for cid in range(1, ncomp + 1):
            if cid != keeper:
                pending.append(np.nonzero(comp == cid))

    resolved_sizes = np.bincount(final[resolved], minlength=k).astype(np.int64)
    while pending:
        deferred: list[tuple[np.ndarray, np.ndarray]] = []
        progressed = False
        for rows, cols in pending:
            neighbor_labels: list[np.ndarray] = []
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                nr, nc = rows + dr, cols + dc
                ok = (0 <= nr) & (nr < height) & (0 <= nc) & (nc < width)
                nr, nc = nr[ok], nc[ok]
                hit = resolved[nr, nc]
                neighbor_labels.append(final[nr[hit], nc[hit]])
            candidates = np.unique(np.concatenate(neighbor_labels))
            if candidates.size == 0:
                deferred.append((rows, cols))
                continue
            target = int(candidates[np.argmax(resolved_sizes[candidates])])
            final[rows, cols] = target
            resolved[rows, cols] = True
            resolved_sizes[target] += rows.size
            progressed = True
        if not progressed:
            raise RuntimeError("connectivity repair stalled")
        pending = deferred
    return final


def extract_features(img: RgbImage, seg: SuperpixelSegmentation) -> SuperpixelFeatures:
    """Per-segment channel mean/std (population), size, and centroid."""
    if seg.labels.shape != img.data.shape[:2]:
        raise ValueError("segmentation does not match image dimensions")
    k = seg.k_actual
    flat = seg.labels.ravel()
    sizes = np.bincount(flat, minlength=k)
    scaled = img.data.astype(np.float64) / 255.0

    rgb_mean = np.empty((k, 3), dtype=np.float64)
    rgb_std = np.empty((k, 3), dtype=np.float64)
    for ch in range(3):
        values = scaled[:, :, ch].ravel()
        total = np.bincount(flat, weights=values, minlength=k)
        total_sq = np.bincount(flat, weights=values * values, minlength=k)
        mean = total / sizes
        var = np.maximum(total_sq / sizes - mean * mean, 0.0)
        rgb_mean[:, ch] = mean
        rgb_std[:, ch] = np.sqrt(var)

    xs, ys = np.meshgrid(
        np.arange(img.width, dtype=np.float64),
        np.arange(img.height, dtype=np.float64),
    )
    cx = np.bincount(flat, weights=xs.ravel(), minlength=k) / sizes
    cy = np.bincount(flat, weights=ys.ravel(), minlength=k) / sizes
    return SuperpixelFeatures(
        rgb_mean=rgb_mean,
        rgb_std=rgb_std,
        sizes=sizes,
        centroids=np.stack([cx, cy], axis=1),
        width=img.width,
        height=img.height,
    )


def pad_or_truncate(features: SuperpixelFeatures, k_fixed: int) -> SuperpixelTokens:
    """Fit features into exactly k_fixed rows with a validity mask.

    Missing rows are zero-filled and masked out; surplus segments are
    dropped largest-index-first (row order is segment id, so the first
    k_fixed ids survive).
    """
    if k_fixed < 1:
        raise ValueError("k_fixed must be >= 1")
    keep = min(features.k_actual, k_fixed)
    block = np.zeros((k_fixed, 6), dtype=np.float64)
    block[:keep, :3] = features.rgb_mean[:keep]
    block[:keep, 3:] = features.rgb_std[:keep]

    geometry = np.zeros((k_fixed, 3), dtype=np.float64)
    geometry[:keep, 0] = features.sizes[:keep] / (features.width * features.height)
    geometry[:keep, 1] = features.centroids[:keep, 0] / max(features.width - 1, 1)
    geometry[:keep, 2] = features.centroids[:keep, 1] / max(features.height - 1, 1)

    mask = np.zeros(k_fixed, dtype=bool)
    mask[:keep] = True
    return SuperpixelTokens(features=block, geometry=geometry, mask=mask)


def save_label_png(seg: SuperpixelSegmentation, path: str) -> None:
    """Write the label map as a 16-bit grayscale PNG for inspection."""
    if seg.k_actual > 65536:
        raise ValueError("too many segments for a 16-bit label map")
    save_png(seg.labels.astype(np.uint16), path)
