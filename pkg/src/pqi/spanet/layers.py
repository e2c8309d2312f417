"""Differentiable primitives: each forward returns (output, cache) and the
matching backward consumes the cache. All math is float64; caches hold the
exact arrays the analytic gradients need, nothing more.

Shapes follow one convention: token matrices are (n, d); per-head attention
tensors are (heads, n, head_dim); masks are boolean (n,) over key rows.
"""

from __future__ import annotations

import numpy as np

LN_EPS = 1e-6
STANDARDIZE_EPS = 1e-12
_GELU_C = 0.7978845608028654  # sqrt(2 / pi)


# -- linear ------------------------------------------------------------------


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    return x @ w + b, (x, w)


def linear_backward(d_out: np.ndarray, cache):
    x, w = cache
    d_x = d_out @ w.T
    d_w = x.T @ d_out
    d_b = d_out.sum(axis=0)
    return d_x, d_w, d_b


# -- gelu (tanh form) --------------------------------------------------------


def gelu_forward(x: np.ndarray):
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    return 0.5 * x * (1.0 + t), (x, t)


def gelu_backward(d_out: np.ndarray, cache):
    x, t = cache
    d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
    return d_out * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner)


# -- layer norm (row-wise over the last axis, with affine) -------------------


def layernorm_forward(x: np.ndarray, gain: np.ndarray, bias: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv_std
    return gain * xhat + bias, (xhat, inv_std, gain)


def layernorm_backward(d_out: np.ndarray, cache):
    xhat, inv_std, gain = cache
    d_gain = (d_out * xhat).sum(axis=0)
    d_bias = d_out.sum(axis=0)
    d_xhat = d_out * gain
    n = xhat.shape[-1]
    d_x = inv_std * (
        d_xhat
        - d_xhat.mean(axis=-1, keepdims=True)
        - xhat * (d_xhat * xhat).sum(axis=-1, keepdims=True) / n
    )
    return d_x, d_gain, d_bias


# -- standardization of a single feature vector (no affine) ------------------


def standardize_forward(v: np.ndarray):
    mu = v.mean()
    inv_std = 1.0 / np.sqrt(v.var() + STANDARDIZE_EPS)
    z = (v - mu) * inv_std
    return z, (z, inv_std)


def standardize_backward(d_z: np.ndarray, cache):
    z, inv_std = cache
    return inv_std * (d_z - d_z.mean() - z * (d_z * z).mean())


# -- masked softmax over the last axis ---------------------------------------


def softmax_forward(scores: np.ndarray, key_mask: np.ndarray | None):
    if key_mask is not None:
        scores = np.where(key_mask, scores, -np.inf)
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=-1, keepdims=True)
    return probs, probs


def softmax_backward(d_probs: np.ndarray, probs: np.ndarray):
    # Masked columns carry probs == 0, so their score gradient is 0 too.
    inner = (d_probs * probs).sum(axis=-1, keepdims=True)
    return probs * (d_probs - inner)


# -- multi-head self-attention ------------------------------------------------


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    n, d = x.shape
    return x.reshape(n, heads, d // heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    heads, n, head_dim = x.shape
    return x.transpose(1, 0, 2).reshape(n, heads * head_dim)


def attention_forward(
    h: np.ndarray,
    wq: np.ndarray,
    bq: np.ndarray,
    wk: np.ndarray,
    bk: np.ndarray,
    wv: np.ndarray,
    bv: np.ndarray,
    wo: np.ndarray,
    bo: np.ndarray,
    heads: int,
    key_mask: np.ndarray | None,
):
    """Self-attention on pre-normalized tokens h (n, d).

    key_mask rows set to False never receive attention weight; queries are
    left unmasked because the caller drops invalid rows at pooling time.
    """
    q, q_cache = linear_forward(h, wq, bq)
    k, k_cache = linear_forward(h, wk, bk)
    v, v_cache = linear_forward(h, wv, bv)
    head_dim = h.shape[1] // heads
    scale = 1.0 / np.sqrt(head_dim)
    qh = _split_heads(q, heads)
    kh = _split_heads(k, heads)
    vh = _split_heads(v, heads)
    scores = (qh @ kh.transpose(0, 2, 1)) * scale
    probs, p_cache = softmax_forward(scores, key_mask)
    ctx = probs @ vh
    merged = _merge_heads(ctx)
    out, o_cache = linear_forward(merged, wo, bo)
    cache = (q_cache, k_cache, v_cache, o_cache, qh, kh, vh, p_cache, scale, heads)
    return out, cache


def attention_backward(d_out: np.ndarray, cache):
    q_cache, k_cache, v_cache, o_cache, qh, kh, vh, probs, scale, heads = cache
    d_merged, d_wo, d_bo = linear_backward(d_out, o_cache)
    d_ctx = _split_heads(d_merged, heads)
    d_probs = d_ctx @ vh.transpose(0, 2, 1)
    d_vh = probs.transpose(0, 2, 1) @ d_ctx
    d_scores = softmax_backward(d_probs, probs)
    d_qh = (d_scores @ kh) * scale
    d_kh = (d_scores.transpose(0, 2, 1) @ qh) * scale
    d_h_q, d_wq, d_bq = linear_backward(_merge_heads(d_qh), q_cache)
    d_h_k, d_wk, d_bk = linear_backward(_merge_heads(d_kh), k_cache)
    d_h_v, d_wv, d_bv = linear_backward(_merge_heads(d_vh), v_cache)
    d_h = d_h_q + d_h_k + d_h_v
    grads = {
        "wq": d_wq,
        "bq": d_bq,
        "wk": d_wk,
        "bk": d_bk,
        "wv": d_wv,
        "bv": d_bv,
        "wo": d_wo,
        "bo": d_bo,
    }
    return d_h, grads
