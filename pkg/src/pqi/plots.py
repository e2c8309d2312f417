"""Figure emitters for the report outputs (headless Agg backend).

Each function renders one figure to the given path; format follows the
file extension. Charts are deliberately plain: single axes, labeled, no
styling that could vary across matplotlib point releases.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .augment import SweepResult
from .scoring import PqiDistribution


def sweep_chart(result: SweepResult, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(result.levels, result.mean_pqi, marker="o")
    ax.set_xlabel("artifact level")
    ax.set_ylabel("mean PQI")
    ax.set_title(f"{result.kind.value} sweep")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def histogram_chart(dist: PqiDistribution, path: str | Path) -> None:
    starts = [start for start, _ in dist.histogram]
    counts = [count for _, count in dist.histogram]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(starts, counts, width=dist.bucket_width, align="edge", edgecolor="black")
    ax.set_xlabel("PQI")
    ax.set_ylabel("images")
    ax.set_title(f"score distribution (mean {dist.mean:.2f}, std {dist.std:.2f})")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def loss_chart(
    history: Sequence[tuple[int, float, float, float]], path: str | Path
) -> None:
    epochs = [row[0] for row in history]
    train = [row[2] for row in history]
    val = [row[3] for row in history]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, train, label="train")
    if any(v == v for v in val):  # nan-free rows exist
        ax.plot(epochs, val, label="val")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE loss")
    ax.set_yscale("log")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
