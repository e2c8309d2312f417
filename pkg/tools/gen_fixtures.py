"""Regenerate the bundled fixture set under tests/fixtures/.

Produces 20 procedural 160x120 road-scene-like images plus a detection
file. The images are built to exercise the artifact sweeps cleanly:

- peak intensity stays at or below 127, so the brightness transform never
  hits the white clamp and the non-decreasing trend has full headroom;
- every image mixes coarse structure (blocks and disks that survive
  horizontal blur) with fine grain (noise that blur removes), keeping the
  speed-blur drop modest instead of catastrophic;
- detection boxes cover the drawn objects with confidences above the
  default threshold.

Run from the repository root:

    python3 tools/gen_fixtures.py

The output is deterministic; regenerating overwrites the same bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from pqi.images import save_png

WIDTH, HEIGHT = 160, 120
N_IMAGES = 20
FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def make_image(index: int, rng: np.random.Generator) -> tuple[np.ndarray, list[dict]]:
    """One synthetic scene: ramp background, blocky objects, fine grain."""
    ys, xs = np.mgrid[0:HEIGHT, 0:WIDTH].astype(np.float64)
    tilt = rng.uniform(-0.15, 0.15)
    base = 45 + 25 * (xs / WIDTH) + 18 * (ys / HEIGHT) + tilt * xs
    canvas = np.repeat(base[:, :, None], 3, axis=2)

    detections: list[dict] = []
    n_objects = int(rng.integers(2, 5))
    for _ in range(n_objects):
        w = int(rng.integers(18, 42))
        h = int(rng.integers(14, 34))
        x0 = int(rng.integers(4, WIDTH - w - 4))
        y0 = int(rng.integers(4, HEIGHT - h - 4))
        lift = rng.uniform(22, 48)
        color = lift + rng.uniform(-6, 6, size=3)
        canvas[y0 : y0 + h, x0 : x0 + w, :] += color[None, None, :]
        detections.append(
            {
                "image_id": f"fix{index:02d}",
                "x0": float(x0),
                "y0": float(y0),
                "x1": float(x0 + w - 1),
                "y1": float(y0 + h - 1),
                "class_id": int(rng.integers(0, 5)),
                "confidence": round(float(rng.uniform(0.45, 0.95)), 3),
            }
        )

    for _ in range(int(rng.integers(1, 3))):
        cx = rng.uniform(15, WIDTH - 15)
        cy = rng.uniform(15, HEIGHT - 15)
        radius = rng.uniform(7, 16)
        disk = ((xs - cx) ** 2 + (ys - cy) ** 2) < radius**2
        canvas[disk] += rng.uniform(15, 30)

    # Horizontal streaks vary only across rows, so a horizontal box blur
    # leaves them intact; they carry most of the fine-scale texture. The
    # small per-pixel grain is the part the speed sweep is allowed to lose.
    rows = rng.normal(0.0, 5.0, size=(HEIGHT, 1, 1))
    grain = rng.normal(0.0, 0.8, size=(HEIGHT, WIDTH, 1))
    canvas += rows + grain
    # Cap at 127 so a doubled intensity still fits in uint8 unclamped.
    return np.clip(np.floor(canvas + 0.5), 12, 127).astype(np.uint8), detections


def main() -> None:
    images_dir = FIXTURES / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    all_detections: list[dict] = []
    for i in range(N_IMAGES):
        rng = np.random.default_rng(1000 + i)
        data, dets = make_image(i, rng)
        save_png(data, images_dir / f"fix{i:02d}.png")
        all_detections.extend(dets)
    lines = [json.dumps(d) for d in all_detections]
    (FIXTURES / "detections.jsonl").write_text("\n".join(lines) + "\n")
    print(f"wrote {N_IMAGES} images and {len(all_detections)} detections")


if __name__ == "__main__":
    main()
