"""Two-branch attention regressor over pixel patches and superpixel stats.

All numerics are hand-built on float64 numpy arrays: forward passes return
explicit caches, backward passes consume them, and training is plain Adam
over named parameter tensors. Nothing here depends on an autograd engine,
which keeps the whole path deterministic and finite-difference checkable.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .model import (
    SpaNetConfig,
    SpaNetModel,
    SpaNetSample,
    backward_sample,
    batch_loss_and_grads,
    build_sample,
    forward_sample,
    init_model,
    patchify,
    predict,
    prepare_pixel_tokens,
    resize_bilinear,
)
from .train import (
    AblationResult,
    TrainConfig,
    TrainResult,
    ablation_run,
    gradient_check,
    lr_at,
    train,
)

__all__ = [
    "AblationResult",
    "SpaNetConfig",
    "SpaNetModel",
    "SpaNetSample",
    "TrainConfig",
    "TrainResult",
    "ablation_run",
    "backward_sample",
    "batch_loss_and_grads",
    "build_sample",
    "forward_sample",
    "gradient_check",
    "init_model",
    "load_checkpoint",
    "lr_at",
    "patchify",
    "predict",
    "prepare_pixel_tokens",
    "resize_bilinear",
    "save_checkpoint",
    "train",
]
