"""Training loop (Adam + half-cosine learning rate), finite-difference
gradient verification, and the ablation harness.

Determinism contract: batches are taken in dataset order with no shuffling
and gradients accumulate in sample order, so a fixed seed and fixed data
order reproduce the loss history bit-for-bit.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import NumericalError
from ..images import RgbImage
from ..metrics import PairedScores, plcc, r_squared, srcc
from .model import (
    SpaNetConfig,
    SpaNetModel,
    SpaNetSample,
    backward_sample,
    batch_loss_and_grads,
    build_sample,
    forward_sample,
    init_model,
    predict,
)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    lr_max: float = 2e-5
    lr_min: float = 1e-6
    batch_size: int = 4
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.lr_min < self.lr_max:
            raise ValueError("lr_min must be below lr_max")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class TrainResult:
    model: SpaNetModel
    history: tuple[tuple[int, float, float, float], ...]
    """Rows of (epoch, lr, train_loss, val_loss); val_loss is nan without
    a validation set."""


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Half-cosine decay: lr_max at epoch 0, lr_min at the final epoch."""
    if epoch < 0 or epoch >= cfg.epochs:
        raise ValueError("epoch out of range")
    span = cfg.epochs - 1
    if span == 0:
        return cfg.lr_max
    frac = 0.5 * (1.0 + math.cos(math.pi * epoch / span))
    return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * frac


class _Adam:
    def __init__(self, params: dict[str, np.ndarray], cfg: TrainConfig) -> None:
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(
        self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float
    ) -> None:
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for name, g in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            params[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)


def train(
    model: SpaNetModel,
    samples: Sequence[SpaNetSample],
    cfg: TrainConfig,
    val_samples: Sequence[SpaNetSample] | None = None,
) -> TrainResult:
    """Minimize MSE in place; returns the model plus per-epoch history.

    Aborts with NumericalError the moment a batch loss goes non-finite.
    """
    if len(samples) == 0:
        raise ValueError("training set is empty")
    for s in samples:
        if not math.isfinite(s.target):
            raise ValueError("training targets must be finite")

    opt = _Adam(model.params, cfg)
    history: list[tuple[int, float, float, float]] = []
    n = len(samples)
    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = samples[start : start + cfg.batch_size]
            loss, grads, _ = batch_loss_and_grads(model, batch)
            if not math.isfinite(loss):
                raise NumericalError(
                    f"training diverged: non-finite loss at epoch {epoch}"
                )
            epoch_loss += loss * len(batch)
            opt.step(model.params, grads, lr)
        val_loss = float("nan")
        if val_samples:
            preds = predict(model, val_samples)
            targets = np.array([s.target for s in val_samples])
            val_loss = float(np.mean((preds - targets) ** 2))
        history.append((epoch, lr, epoch_loss / n, val_loss))
    return TrainResult(model=model, history=tuple(history))


def gradient_check(
    model: SpaNetModel,
    sample: SpaNetSample,
    n_probes: int = 200,
    step: float = 1e-5,
    seed: int = 0,
    floor: float = 1e-6,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Probes at least one coordinate of every parameter tensor and fills up
    to n_probes with random extra coordinates, so no parameter group goes
    unverified. Loss is the squared error against the sample target.

    The relative error divides by max(|analytic|, |numeric|, floor). The
    floor keeps coordinates whose true gradient sits below the central-
    difference noise (about eps * loss / step, around 1e-11 here) from
    reporting that noise as error; a genuinely wrong gradient of any
    consequential size still shows up at full strength.
    """
    if not math.isfinite(sample.target):
        raise ValueError("gradient check needs a finite sample target")

    def loss_value() -> float:
        pred, _ = forward_sample(model, sample)
        return (pred - sample.target) ** 2

    pred, cache = forward_sample(model, sample)
    grads, _ = backward_sample(model, cache, 2.0 * (pred - sample.target))

    rng = np.random.default_rng(seed)
    names = sorted(model.params)
    probes: list[tuple[str, int]] = [
        (name, int(rng.integers(model.params[name].size))) for name in names
    ]
    while len(probes) < n_probes:
        name = names[int(rng.integers(len(names)))]
        probes.append((name, int(rng.integers(model.params[name].size))))

    worst = 0.0
    for name, idx in probes:
        tensor = model.params[name]
        original = tensor.flat[idx]
        tensor.flat[idx] = original + step
        up = loss_value()
        tensor.flat[idx] = original - step
        down = loss_value()
        tensor.flat[idx] = original
        fd = (up - down) / (2.0 * step)
        analytic = grads[name].flat[idx]
        rel = abs(analytic - fd) / max(abs(analytic), abs(fd), floor)
        worst = max(worst, rel)
    return worst


@dataclass(frozen=True)
class AblationResult:
    variant: str
    plcc: float
    srcc: float
    r2: float
    final_train_loss: float
    n: int


def _variant_config(variant: str, base: SpaNetConfig) -> SpaNetConfig:
    if variant == "full":
        return base
    if variant == "no_superpixel":
        return dataclasses.replace(base, use_superpixel=False)
    if variant == "no_pos_encoding":
        return dataclasses.replace(base, use_pos_encoding=False)
    if variant.startswith("k="):
        k = int(variant[2:])
        if k == 0:
            return dataclasses.replace(base, use_superpixel=False)
        if k < 1:
            raise ValueError("k must be >= 0")
        return dataclasses.replace(base, superpixel_k=k)
    raise ValueError(f"unknown ablation variant: {variant!r}")


def ablation_run(
    variant: str,
    dataset: Sequence[tuple[RgbImage, float]],
    base_cfg: SpaNetConfig,
    train_cfg: TrainConfig,
) -> AblationResult:
    """Train the variant from scratch and report fit metrics on the same
    (desk-scale) dataset. Variants: "full", "no_superpixel",
    "no_pos_encoding", or "k=N" with N in {0, 100, ..., 500} (k=0 is the
    pixel-branch-only model)."""
    cfg = _variant_config(variant, base_cfg)
    samples = [build_sample(img, cfg, target) for img, target in dataset]
    model = init_model(cfg, seed=train_cfg.seed)
    result = train(model, samples, train_cfg)
    preds = predict(result.model, samples)
    targets = np.array([t for _, t in dataset])
    paired = PairedScores(preds, targets)
    return AblationResult(
        variant=variant,
        plcc=plcc(paired),
        srcc=srcc(paired),
        r2=r_squared(paired),
        final_train_loss=result.history[-1][2],
        n=len(dataset),
    )
