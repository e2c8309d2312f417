"""Model definition: config, parameters, sample preparation, and the
hand-written forward/backward passes for both branches and the fused head.

Parameter tensors live in a flat name -> float64 array dict. Names are
hierarchical ("pix.block0.attn.wq", "sp.geo.w", "head.w1"), created in a
fixed order so seeded initialization is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import NumericalError
from ..images import RgbImage
from ..superpixels import (
    SuperpixelTokens,
    extract_features,
    pad_or_truncate,
    slic,
)
from .layers import (
    attention_backward,
    attention_forward,
    gelu_backward,
    gelu_forward,
    layernorm_backward,
    layernorm_forward,
    linear_backward,
    linear_forward,
    standardize_backward,
    standardize_forward,
)

REQUIRED_HEAD_HIDDEN = 18
INIT_SCALE = 0.02


@dataclass(frozen=True)
class SpaNetConfig:
    """Architecture knobs. The defaults are the full-scale configuration;
    tests shrink image_side/superpixel_k to keep runtimes down without
    changing any of the structure."""

    image_side: int = 512
    patch_side: int = 32
    heads: int = 8
    layers: int = 2
    token_dim: int = 256
    branch_out: int = 1024
    superpixel_k: int = 500
    superpixel_feat: int = 6
    head_hidden: int = 18
    use_superpixel: bool = True
    use_pos_encoding: bool = True

    def __post_init__(self) -> None:
        if self.image_side < 1 or self.patch_side < 1:
            raise ValueError("image_side and patch_side must be positive")
        if self.image_side % self.patch_side != 0:
            raise ValueError("image_side must be divisible by patch_side")
        if self.heads < 1 or self.token_dim % self.heads != 0:
            raise ValueError("heads must divide token_dim")
        if self.layers < 0:
            raise ValueError("layers must be >= 0")
        if self.branch_out < 1 or self.superpixel_feat < 1 or self.superpixel_k < 1:
            raise ValueError("branch_out, superpixel_feat, superpixel_k must be >= 1")
        if self.head_hidden != REQUIRED_HEAD_HIDDEN:
            raise ValueError(f"head_hidden is fixed at {REQUIRED_HEAD_HIDDEN}")

    @property
    def n_tokens(self) -> int:
        return (self.image_side // self.patch_side) ** 2

    @property
    def patch_dim(self) -> int:
        return 3 * self.patch_side * self.patch_side

    @property
    def ffn_dim(self) -> int:
        return 4 * self.token_dim

    @property
    def fused_dim(self) -> int:
        return 2 * self.branch_out if self.use_superpixel else self.branch_out


@dataclass
class SpaNetModel:
    cfg: SpaNetConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class SpaNetSample:
    """One training/inference example. Superpixel fields may be None when
    the model variant does not use that branch."""

    pixel_tokens: np.ndarray
    sp_features: np.ndarray | None
    sp_geometry: np.ndarray | None
    sp_mask: np.ndarray | None
    target: float = float("nan")


def _parameter_plan(cfg: SpaNetConfig) -> list[tuple[str, tuple[int, ...], str]]:
    """Canonical (name, shape, kind) list; creation order defines init order."""
    plan: list[tuple[str, tuple[int, ...], str]] = []

    def block_plan(prefix: str) -> None:
        d, f = cfg.token_dim, cfg.ffn_dim
        for i in range(cfg.layers):
            base = f"{prefix}.block{i}"
            plan.append((f"{base}.ln1.g", (d,), "gain"))
            plan.append((f"{base}.ln1.b", (d,), "bias"))
            for name in ("wq", "wk", "wv", "wo"):
                plan.append((f"{base}.attn.{name}", (d, d), "weight"))
            for name in ("bq", "bk", "bv", "bo"):
                plan.append((f"{base}.attn.{name}", (d,), "bias"))
            plan.append((f"{base}.ln2.g", (d,), "gain"))
            plan.append((f"{base}.ln2.b", (d,), "bias"))
            plan.append((f"{base}.ffn.w1", (d, f), "weight"))
            plan.append((f"{base}.ffn.b1", (f,), "bias"))
            plan.append((f"{base}.ffn.w2", (f, d), "weight"))
            plan.append((f"{base}.ffn.b2", (d,), "bias"))
        plan.append((f"{prefix}.lnf.g", (d,), "gain"))
        plan.append((f"{prefix}.lnf.b", (d,), "bias"))
        plan.append((f"{prefix}.out.w", (d, cfg.branch_out), "weight"))
        plan.append((f"{prefix}.out.b", (cfg.branch_out,), "bias"))

    plan.append(("pix.embed.w", (cfg.patch_dim, cfg.token_dim), "weight"))
    plan.append(("pix.embed.b", (cfg.token_dim,), "bias"))
    plan.append(("pix.pos", (cfg.n_tokens, cfg.token_dim), "weight"))
    block_plan("pix")
    if cfg.use_superpixel:
        plan.append(("sp.embed.w", (cfg.superpixel_feat, cfg.token_dim), "weight"))
        plan.append(("sp.embed.b", (cfg.token_dim,), "bias"))
        if cfg.use_pos_encoding:
            plan.append(("sp.geo.w", (3, cfg.token_dim), "weight"))
            plan.append(("sp.geo.b", (cfg.token_dim,), "bias"))
        block_plan("sp")
    plan.append(("head.w1", (cfg.fused_dim, cfg.head_hidden), "weight"))
    plan.append(("head.b1", (cfg.head_hidden,), "bias"))
    plan.append(("head.w2", (cfg.head_hidden, 1), "weight"))
    plan.append(("head.b2", (1,), "bias"))
    return plan


def init_model(cfg: SpaNetConfig, seed: int = 0) -> SpaNetModel:
    """Seeded init: weights N(0, 0.02), biases 0, norm gains 1."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape, kind in _parameter_plan(cfg):
        if kind == "weight":
            params[name] = rng.normal(0.0, INIT_SCALE, size=shape)
        elif kind == "bias":
            params[name] = np.zeros(shape)
        else:
            params[name] = np.ones(shape)
    return SpaNetModel(cfg=cfg, params=params)


# -- input preparation --------------------------------------------------------


def resize_bilinear(img: RgbImage, side: int) -> np.ndarray:
    """Resize to (side, side, 3) float64 in [0, 1], half-pixel-centered."""
    src = img.data.astype(np.float64) / 255.0
    h, w = src.shape[:2]
    if (h, w) == (side, side):
        return src

    def axis_coords(n_src: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = (np.arange(side) + 0.5) * (n_src / side) - 0.5
        pos = np.clip(pos, 0.0, n_src - 1.0)
        lo = np.floor(pos).astype(int)
        hi = np.minimum(lo + 1, n_src - 1)
        return lo, hi, pos - lo

    y0, y1, wy = axis_coords(h)
    x0, x1, wx = axis_coords(w)
    top = src[np.ix_(y0, x0)] * (1.0 - wx)[None, :, None] + src[np.ix_(y0, x1)] * wx[
        None, :, None
    ]
    bot = src[np.ix_(y1, x0)] * (1.0 - wx)[None, :, None] + src[np.ix_(y1, x1)] * wx[
        None, :, None
    ]
    return top * (1.0 - wy)[:, None, None] + bot * wy[:, None, None]


def patchify(arr: np.ndarray, cfg: SpaNetConfig) -> np.ndarray:
    """Cut a (side, side, 3) array into row-major flattened patches.

    Each token flattens its patch in (row, col, channel) order, giving
    patch_side * patch_side * 3 raw dims per token.
    """
    side, patch = cfg.image_side, cfg.patch_side
    if arr.shape != (side, side, 3):
        raise ValueError(f"expected ({side}, {side}, 3) input, got {arr.shape}")
    n = side // patch
    tokens = (
        arr.reshape(n, patch, n, patch, 3)
        .transpose(0, 2, 1, 3, 4)
        .reshape(n * n, cfg.patch_dim)
    )
    return np.ascontiguousarray(tokens, dtype=np.float64)


def prepare_pixel_tokens(img: RgbImage, cfg: SpaNetConfig) -> np.ndarray:
    return patchify(resize_bilinear(img, cfg.image_side), cfg)


def build_sample(
    img: RgbImage,
    cfg: SpaNetConfig,
    target: float = float("nan"),
    compactness: float = 10.0,
    iters: int = 10,
) -> SpaNetSample:
    """Full preparation pipeline: resize+patchify plus segment features."""
    tokens = prepare_pixel_tokens(img, cfg)
    if not cfg.use_superpixel:
        return SpaNetSample(tokens, None, None, None, float(target))
    seg = slic(img, k_target=cfg.superpixel_k, compactness=compactness, iters=iters)
    sp = pad_or_truncate(extract_features(img, seg), cfg.superpixel_k)
    return SpaNetSample(
        tokens, sp.features, sp.geometry, sp.mask, float(target)
    )


def sample_from_tokens(
    tokens: np.ndarray, sp: SuperpixelTokens | None, target: float = float("nan")
) -> SpaNetSample:
    if sp is None:
        return SpaNetSample(tokens, None, None, None, float(target))
    return SpaNetSample(tokens, sp.features, sp.geometry, sp.mask, float(target))


# -- forward / backward -------------------------------------------------------


def _branch_forward(
    params: dict[str, np.ndarray],
    prefix: str,
    x: np.ndarray,
    mask: np.ndarray | None,
    cfg: SpaNetConfig,
):
    block_caches = []
    for i in range(cfg.layers):
        base = f"{prefix}.block{i}"
        h, ln1_cache = layernorm_forward(
            x, params[f"{base}.ln1.g"], params[f"{base}.ln1.b"]
        )
        attn_out, attn_cache = attention_forward(
            h,
            params[f"{base}.attn.wq"],
            params[f"{base}.attn.bq"],
            params[f"{base}.attn.wk"],
            params[f"{base}.attn.bk"],
            params[f"{base}.attn.wv"],
            params[f"{base}.attn.bv"],
            params[f"{base}.attn.wo"],
            params[f"{base}.attn.bo"],
            cfg.heads,
            mask,
        )
        x1 = x + attn_out
        g, ln2_cache = layernorm_forward(
            x1, params[f"{base}.ln2.g"], params[f"{base}.ln2.b"]
        )
        f1, ffn1_cache = linear_forward(
            g, params[f"{base}.ffn.w1"], params[f"{base}.ffn.b1"]
        )
        a, gelu_cache = gelu_forward(f1)
        f2, ffn2_cache = linear_forward(
            a, params[f"{base}.ffn.w2"], params[f"{base}.ffn.b2"]
        )
        x = x1 + f2
        block_caches.append(
            (ln1_cache, attn_cache, ln2_cache, ffn1_cache, gelu_cache, ffn2_cache)
        )

    hf, lnf_cache = layernorm_forward(
        x, params[f"{prefix}.lnf.g"], params[f"{prefix}.lnf.b"]
    )
    if mask is None:
        n_valid = hf.shape[0]
        pooled = hf.mean(axis=0)
    else:
        n_valid = int(mask.sum())
        pooled = hf[mask].sum(axis=0) / n_valid
    out_row, out_cache = linear_forward(
        pooled[None, :], params[f"{prefix}.out.w"], params[f"{prefix}.out.b"]
    )
    out = out_row[0]
    if out.shape != (cfg.branch_out,):
        raise AssertionError("branch output width mismatch")
    cache = (block_caches, lnf_cache, out_cache, mask, n_valid, hf.shape[0])
    return out, cache


def _branch_backward(
    params: dict[str, np.ndarray],
    prefix: str,
    d_out: np.ndarray,
    cache,
    cfg: SpaNetConfig,
    grads: dict[str, np.ndarray],
) -> np.ndarray:
    block_caches, lnf_cache, out_cache, mask, n_valid, n_rows = cache
    d_pooled_row, d_w, d_b = linear_backward(d_out[None, :], out_cache)
    grads[f"{prefix}.out.w"] += d_w
    grads[f"{prefix}.out.b"] += d_b
    d_pooled = d_pooled_row[0]

    d_hf = np.zeros((n_rows, cfg.token_dim))
    if mask is None:
        d_hf[:] = d_pooled / n_rows
    else:
        d_hf[mask] = d_pooled / n_valid
    d_x, d_g, d_bb = layernorm_backward(d_hf, lnf_cache)
    grads[f"{prefix}.lnf.g"] += d_g
    grads[f"{prefix}.lnf.b"] += d_bb

    for i in reversed(range(cfg.layers)):
        base = f"{prefix}.block{i}"
        ln1_cache, attn_cache, ln2_cache, ffn1_cache, gelu_cache, ffn2_cache = (
            block_caches[i]
        )
        d_a, d_w2, d_b2 = linear_backward(d_x, ffn2_cache)
        grads[f"{base}.ffn.w2"] += d_w2
        grads[f"{base}.ffn.b2"] += d_b2
        d_f1 = gelu_backward(d_a, gelu_cache)
        d_gn, d_w1, d_b1 = linear_backward(d_f1, ffn1_cache)
        grads[f"{base}.ffn.w1"] += d_w1
        grads[f"{base}.ffn.b1"] += d_b1
        d_from_ln2, d_g2, d_b2n = layernorm_backward(d_gn, ln2_cache)
        grads[f"{base}.ln2.g"] += d_g2
        grads[f"{base}.ln2.b"] += d_b2n
        d_x1 = d_x + d_from_ln2

        d_h, attn_grads = attention_backward(d_x1, attn_cache)
        for short, value in attn_grads.items():
            grads[f"{base}.attn.{short}"] += value
        d_from_ln1, d_g1, d_b1n = layernorm_backward(d_h, ln1_cache)
        grads[f"{base}.ln1.g"] += d_g1
        grads[f"{base}.ln1.b"] += d_b1n
        d_x = d_x1 + d_from_ln1
    return d_x


def forward_sample(model: SpaNetModel, sample: SpaNetSample):
    """Single-example forward pass. Returns (prediction, cache)."""
    cfg, params = model.cfg, model.params
    tokens = sample.pixel_tokens
    if tokens.shape != (cfg.n_tokens, cfg.patch_dim):
        raise ValueError(
            f"pixel tokens must be ({cfg.n_tokens}, {cfg.patch_dim}),"
            f" got {tokens.shape}"
        )

    embedded, pix_embed_cache = linear_forward(
        tokens, params["pix.embed.w"], params["pix.embed.b"]
    )
    x = embedded + params["pix.pos"]
    pix_out, pix_cache = _branch_forward(params, "pix", x, None, cfg)

    sp_out = None
    sp_cache = sp_embed_cache = sp_geo_cache = None
    if cfg.use_superpixel:
        feats, geo, mask = sample.sp_features, sample.sp_geometry, sample.sp_mask
        if feats is None or geo is None or mask is None:
            raise ValueError("sample has no superpixel data for this model")
        if feats.shape != (cfg.superpixel_k, cfg.superpixel_feat):
            raise ValueError(
                f"superpixel features must be"
                f" ({cfg.superpixel_k}, {cfg.superpixel_feat}), got {feats.shape}"
            )
        if not mask.any():
            raise ValueError("superpixel mask has no valid rows")
        e, sp_embed_cache = linear_forward(
            feats, params["sp.embed.w"], params["sp.embed.b"]
        )
        if cfg.use_pos_encoding:
            enc, sp_geo_cache = linear_forward(
                geo, params["sp.geo.w"], params["sp.geo.b"]
            )
            e = e + enc
        sp_out, sp_cache = _branch_forward(params, "sp", e, mask, cfg)

    zp, zp_cache = standardize_forward(pix_out)
    if cfg.use_superpixel:
        assert sp_out is not None
        zs, zs_cache = standardize_forward(sp_out)
        fused = np.concatenate([zp, zs])
    else:
        zs_cache = None
        fused = zp
    h1, head1_cache = linear_forward(
        fused[None, :], params["head.w1"], params["head.b1"]
    )
    if h1.shape != (1, REQUIRED_HEAD_HIDDEN):
        raise AssertionError("fusion hidden width mismatch")
    act, head_gelu_cache = gelu_forward(h1)
    y, head2_cache = linear_forward(act, params["head.w2"], params["head.b2"])
    pred = float(y[0, 0])
    if not (np.isfinite(pred) and np.all(np.isfinite(pix_out))):
        raise NumericalError("non-finite activation in forward pass")
    if sp_out is not None and not np.all(np.isfinite(sp_out)):
        raise NumericalError("non-finite activation in forward pass")

    cache = {
        "pix_embed": pix_embed_cache,
        "pix_branch": pix_cache,
        "sp_embed": sp_embed_cache,
        "sp_geo": sp_geo_cache,
        "sp_branch": sp_cache,
        "zp": zp_cache,
        "zs": zs_cache,
        "head1": head1_cache,
        "head_gelu": head_gelu_cache,
        "head2": head2_cache,
    }
    return pred, cache


@dataclass(frozen=True)
class InputGrads:
    pixel_tokens: np.ndarray
    sp_features: np.ndarray | None
    sp_geometry: np.ndarray | None


def zero_grads(model: SpaNetModel) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(value) for name, value in model.params.items()}


def backward_sample(
    model: SpaNetModel,
    cache: dict,
    d_pred: float,
    grads: dict[str, np.ndarray] | None = None,
) -> tuple[dict[str, np.ndarray], InputGrads]:
    """Accumulate parameter gradients for one sample into grads."""
    cfg, params = model.cfg, model.params
    if grads is None:
        grads = zero_grads(model)

    d_y = np.array([[float(d_pred)]])
    d_act, d_w2, d_b2 = linear_backward(d_y, cache["head2"])
    grads["head.w2"] += d_w2
    grads["head.b2"] += d_b2
    d_h1 = gelu_backward(d_act, cache["head_gelu"])
    d_fused_row, d_w1, d_b1 = linear_backward(d_h1, cache["head1"])
    grads["head.w1"] += d_w1
    grads["head.b1"] += d_b1
    d_fused = d_fused_row[0]

    d_sp_features = d_sp_geometry = None
    if cfg.use_superpixel:
        d_zp, d_zs = d_fused[: cfg.branch_out], d_fused[cfg.branch_out :]
        d_sp_out = standardize_backward(d_zs, cache["zs"])
        d_e = _branch_backward(params, "sp", d_sp_out, cache["sp_branch"], cfg, grads)
        if cfg.use_pos_encoding:
            d_sp_geometry, d_gw, d_gb = linear_backward(d_e, cache["sp_geo"])
            grads["sp.geo.w"] += d_gw
            grads["sp.geo.b"] += d_gb
        d_sp_features, d_ew, d_eb = linear_backward(d_e, cache["sp_embed"])
        grads["sp.embed.w"] += d_ew
        grads["sp.embed.b"] += d_eb
    else:
        d_zp = d_fused

    d_pix_out = standardize_backward(d_zp, cache["zp"])
    d_x = _branch_backward(params, "pix", d_pix_out, cache["pix_branch"], cfg, grads)
    grads["pix.pos"] += d_x
    d_tokens, d_ew, d_eb = linear_backward(d_x, cache["pix_embed"])
    grads["pix.embed.w"] += d_ew
    grads["pix.embed.b"] += d_eb
    return grads, InputGrads(d_tokens, d_sp_features, d_sp_geometry)


def batch_loss_and_grads(
    model: SpaNetModel, samples: Sequence[SpaNetSample]
) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    """MSE loss and summed gradients over a batch, in sample order."""
    if len(samples) == 0:
        raise ValueError("empty batch")
    grads = zero_grads(model)
    preds = np.empty(len(samples))
    loss = 0.0
    for i, sample in enumerate(samples):
        pred, cache = forward_sample(model, sample)
        preds[i] = pred
        residual = pred - sample.target
        loss += residual * residual
        backward_sample(model, cache, 2.0 * residual / len(samples), grads)
    return loss / len(samples), grads, preds


def predict(model: SpaNetModel, samples: Sequence[SpaNetSample]) -> np.ndarray:
    return np.array([forward_sample(model, s)[0] for s in samples])
