"""Tests for the dual-branch attention regressor: config, forward, backward."""

from __future__ import annotations

import numpy as np
import pytest

from pqi.errors import DataError, NumericalError
from pqi.images import RgbImage
from pqi.spanet import (
    SpaNetConfig,
    SpaNetSample,
    backward_sample,
    batch_loss_and_grads,
    build_sample,
    forward_sample,
    init_model,
    load_checkpoint,
    patchify,
    predict,
    prepare_pixel_tokens,
    resize_bilinear,
    save_checkpoint,
)
from pqi.spanet.model import _parameter_plan


def small_config(**overrides) -> SpaNetConfig:
    base = dict(
        image_side=16,
        patch_side=8,
        heads=2,
        layers=1,
        token_dim=8,
        branch_out=16,
        superpixel_k=5,
        superpixel_feat=6,
    )
    base.update(overrides)
    return SpaNetConfig(**base)


def random_sample(rng: np.random.Generator, cfg: SpaNetConfig,
                  n_valid: int | None = None,
                  target: float = float("nan")) -> SpaNetSample:
    tokens = rng.random((cfg.n_tokens, cfg.patch_dim))
    if not cfg.use_superpixel:
        return SpaNetSample(tokens, None, None, None, target)
    feats = rng.random((cfg.superpixel_k, cfg.superpixel_feat))
    geo = rng.random((cfg.superpixel_k, 3))
    mask = np.zeros(cfg.superpixel_k, dtype=bool)
    n_valid = cfg.superpixel_k if n_valid is None else n_valid
    mask[:n_valid] = True
    feats[~mask] = 0.0
    geo[~mask] = 0.0
    return SpaNetSample(tokens, feats, geo, mask, target)


class TestConfig:
    def test_full_scale_defaults(self):
        cfg = SpaNetConfig()
        assert cfg.image_side == 512
        assert cfg.patch_side == 32
        assert cfg.n_tokens == 256
        assert cfg.patch_dim == 3 * 32 * 32
        assert cfg.token_dim == 256
        assert cfg.heads == 8
        assert cfg.layers == 2
        assert cfg.branch_out == 1024
        assert cfg.superpixel_k == 500
        assert cfg.superpixel_feat == 6
        assert cfg.head_hidden == 18
        assert cfg.fused_dim == 2048

    def test_patch_must_divide_side(self):
        with pytest.raises(ValueError):
            SpaNetConfig(image_side=100, patch_side=32)

    def test_heads_must_divide_token_dim(self):
        with pytest.raises(ValueError):
            SpaNetConfig(heads=7, token_dim=256)

    def test_fusion_hidden_is_fixed(self):
        with pytest.raises(ValueError):
            SpaNetConfig(head_hidden=32)

    def test_fused_dim_halves_without_superpixels(self):
        cfg = small_config(use_superpixel=False)
        assert cfg.fused_dim == cfg.branch_out


class TestInit:
    def test_seeded_init_is_reproducible(self):
        cfg = small_config()
        a = init_model(cfg, seed=3)
        b = init_model(cfg, seed=3)
        assert set(a.params) == set(b.params)
        for name in a.params:
            assert np.array_equal(a.params[name], b.params[name]), name

    def test_different_seeds_differ(self):
        cfg = small_config()
        a = init_model(cfg, seed=0)
        b = init_model(cfg, seed=1)
        assert not np.array_equal(a.params["pix.embed.w"], b.params["pix.embed.w"])

    def test_bias_and_gain_conventions(self):
        model = init_model(small_config(), seed=0)
        for name, shape, kind in _parameter_plan(model.cfg):
            assert model.params[name].shape == shape, name
            if kind == "bias":
                assert np.all(model.params[name] == 0.0), name
            elif kind == "gain":
                assert np.all(model.params[name] == 1.0), name

    def test_no_pos_encoding_drops_geometry_params(self):
        cfg = small_config(use_pos_encoding=False)
        model = init_model(cfg, seed=0)
        assert "sp.geo.w" not in model.params
        assert "sp.embed.w" in model.params

    def test_no_superpixel_drops_branch(self):
        cfg = small_config(use_superpixel=False)
        model = init_model(cfg, seed=0)
        assert not any(name.startswith("sp.") for name in model.params)


class TestInputPrep:
    def test_resize_identity(self):
        rng = np.random.default_rng(0)
        img = RgbImage(rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8))
        out = resize_bilinear(img, 16)
        assert np.array_equal(out, img.data.astype(np.float64) / 255.0)

    def test_resize_constant_stays_constant(self):
        img = RgbImage(np.full((7, 11, 3), 100, dtype=np.uint8))
        out = resize_bilinear(img, 16)
        assert out.shape == (16, 16, 3)
        assert np.allclose(out, 100 / 255)

    def test_resize_respects_range(self):
        rng = np.random.default_rng(1)
        img = RgbImage(rng.integers(0, 256, size=(9, 14, 3), dtype=np.uint8))
        out = resize_bilinear(img, 32)
        assert out.min() >= img.data.min() / 255 - 1e-12
        assert out.max() <= img.data.max() / 255 + 1e-12

    def test_patchify_is_local_and_row_major(self):
        cfg = small_config()
        arr = np.zeros((16, 16, 3))
        # Patch grid is 2x2; give each patch a distinct constant value.
        values = {(0, 0): 0.1, (0, 1): 0.2, (1, 0): 0.3, (1, 1): 0.4}
        for (i, j), v in values.items():
            arr[i * 8 : (i + 1) * 8, j * 8 : (j + 1) * 8, :] = v
        tokens = patchify(arr, cfg)
        assert tokens.shape == (4, 192)
        for idx, (i, j) in enumerate([(0, 0), (0, 1), (1, 0), (1, 1)]):
            assert np.all(tokens[idx] == values[(i, j)])

    def test_patchify_flatten_order(self):
        cfg = small_config()
        arr = np.arange(16 * 16 * 3, dtype=np.float64).reshape(16, 16, 3)
        tokens = patchify(arr, cfg)
        manual = arr[:8, :8, :].reshape(-1)
        assert np.array_equal(tokens[0], manual)

    def test_patchify_shape_check(self):
        cfg = small_config()
        with pytest.raises(ValueError):
            patchify(np.zeros((8, 8, 3)), cfg)

    def test_prepare_pixel_tokens_shape(self):
        rng = np.random.default_rng(2)
        img = RgbImage(rng.integers(0, 256, size=(24, 30, 3), dtype=np.uint8))
        cfg = small_config()
        tokens = prepare_pixel_tokens(img, cfg)
        assert tokens.shape == (cfg.n_tokens, cfg.patch_dim)

    def test_build_sample_runs_segmentation(self):
        rng = np.random.default_rng(3)
        img = RgbImage(rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8))
        cfg = small_config()
        sample = build_sample(img, cfg, target=2.5)
        assert sample.pixel_tokens.shape == (cfg.n_tokens, cfg.patch_dim)
        assert sample.sp_features.shape == (cfg.superpixel_k, 6)
        assert sample.sp_geometry.shape == (cfg.superpixel_k, 3)
        assert sample.sp_mask.dtype == bool
        assert sample.target == 2.5

    def test_build_sample_without_superpixels(self):
        rng = np.random.default_rng(4)
        img = RgbImage(rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8))
        sample = build_sample(img, small_config(use_superpixel=False))
        assert sample.sp_features is None


class TestForward:
    def test_returns_finite_scalar(self):
        rng = np.random.default_rng(5)
        cfg = small_config()
        model = init_model(cfg, seed=0)
        pred, cache = forward_sample(model, random_sample(rng, cfg))
        assert isinstance(pred, float)
        assert np.isfinite(pred)
        assert cache["head1"] is not None

    def test_token_shape_enforced(self):
        rng = np.random.default_rng(6)
        cfg = small_config()
        model = init_model(cfg, seed=0)
        bad = SpaNetSample(rng.random((3, cfg.patch_dim)), None, None, None)
        with pytest.raises(ValueError):
            forward_sample(model, bad)

    def test_missing_superpixel_data_rejected(self):
        rng = np.random.default_rng(7)
        cfg = small_config()
        model = init_model(cfg, seed=0)
        sample = SpaNetSample(rng.random((cfg.n_tokens, cfg.patch_dim)),
                              None, None, None)
        with pytest.raises(ValueError):
            forward_sample(model, sample)

    def test_all_masked_rejected(self):
        rng = np.random.default_rng(8)
        cfg = small_config()
        model = init_model(cfg, seed=0)
        sample = random_sample(rng, cfg, n_valid=0)
        with pytest.raises(ValueError):
            forward_sample(model, sample)

    def test_non_finite_parameters_raise_numerical_error(self):
        rng = np.random.default_rng(9)
        cfg = small_config()
        model = init_model(cfg, seed=0)
        model.params["head.b2"] = np.array([np.nan])
        with pytest.raises(NumericalError):
            forward_sample(model, random_sample(rng, cfg))

    def test_zeroed_head_gives_constant_bias_output(self):
        rng = np.random.default_rng(10)
        cfg = small_config()
        model = init_model(cfg, seed=0)
        model.params["head.w2"] = np.zeros_like(model.params["head.w2"])
        model.params["head.b2"] = np.array([3.75])
        preds = predict(model, [random_sample(rng, cfg) for _ in range(4)])
        assert np.all(preds == 3.75)

    def test_superpixel_rows_are_order_free(self):
        rng = np.random.default_rng(11)
        cfg = small_config()
        model = init_model(cfg, seed=1)
        sample = random_sample(rng, cfg, n_valid=3)
        pred_a, _ = forward_sample(model, sample)
        perm = rng.permutation(cfg.superpixel_k)
        shuffled = SpaNetSample(
            sample.pixel_tokens,
            sample.sp_features[perm],
            sample.sp_geometry[perm],
            sample.sp_mask[perm],
            sample.target,
        )
        pred_b, _ = forward_sample(model, shuffled)
        assert pred_b == pytest.approx(pred_a, abs=1e-9)

    def test_pixel_tokens_are_position_sensitive(self):
        rng = np.random.default_rng(12)
        cfg = small_config()
        model = init_model(cfg, seed=1)
        sample = random_sample(rng, cfg)
        pred_a, _ = forward_sample(model, sample)
        swapped_tokens = sample.pixel_tokens[::-1].copy()
        swapped = SpaNetSample(swapped_tokens, sample.sp_features,
                               sample.sp_geometry, sample.sp_mask)
        pred_b, _ = forward_sample(model, swapped)
        assert pred_a != pytest.approx(pred_b, abs=1e-12)

    def test_masked_rows_have_no_influence(self):
        rng = np.random.default_rng(13)
        cfg = small_config()
        model = init_model(cfg, seed=2)
        sample = random_sample(rng, cfg, n_valid=3)
        pred_a, _ = forward_sample(model, sample)
        feats = sample.sp_features.copy()
        geo = sample.sp_geometry.copy()
        feats[3:] = 99.0
        geo[3:] = -42.0
        tampered = SpaNetSample(sample.pixel_tokens, feats, geo, sample.sp_mask)
        pred_b, _ = forward_sample(model, tampered)
        assert pred_b == pytest.approx(pred_a, abs=1e-12)

    def test_geometry_matters_when_pos_encoding_on(self):
        rng = np.random.default_rng(14)
        cfg = small_config()
        model = init_model(cfg, seed=3)
        sample = random_sample(rng, cfg)
        pred_a, _ = forward_sample(model, sample)
        moved = SpaNetSample(sample.pixel_tokens, sample.sp_features,
                             sample.sp_geometry + 0.25, sample.sp_mask)
        pred_b, _ = forward_sample(model, moved)
        assert pred_a != pytest.approx(pred_b, abs=1e-12)

    def test_geometry_ignored_when_pos_encoding_off(self):
        rng = np.random.default_rng(15)
        cfg = small_config(use_pos_encoding=False)
        model = init_model(cfg, seed=3)
        sample = random_sample(rng, cfg)
        pred_a, _ = forward_sample(model, sample)
        moved = SpaNetSample(sample.pixel_tokens, sample.sp_features,
                             sample.sp_geometry + 0.25, sample.sp_mask)
        pred_b, _ = forward_sample(model, moved)
        assert pred_b == pred_a


class TestBackward:
    def test_masked_rows_get_zero_input_gradient(self):
        rng = np.random.default_rng(16)
        cfg = small_config()
        model = init_model(cfg, seed=0)
        sample = random_sample(rng, cfg, n_valid=3)
        _, cache = forward_sample(model, sample)
        _, input_grads = backward_sample(model, cache, d_pred=1.0)
        assert np.all(input_grads.sp_features[3:] == 0.0)
        assert np.all(input_grads.sp_geometry[3:] == 0.0)
        # Valid rows do carry gradient.
        assert np.any(input_grads.sp_features[:3] != 0.0)

    def test_input_gradient_shapes(self):
        rng = np.random.default_rng(17)
        cfg = small_config()
        model = init_model(cfg, seed=0)
        sample = random_sample(rng, cfg)
        _, cache = forward_sample(model, sample)
        grads, input_grads = backward_sample(model, cache, d_pred=0.5)
        assert input_grads.pixel_tokens.shape == sample.pixel_tokens.shape
        assert set(grads) == set(model.params)
        for name in grads:
            assert grads[name].shape == model.params[name].shape, name

    def test_batch_loss_matches_manual_mse(self):
        rng = np.random.default_rng(18)
        cfg = small_config()
        model = init_model(cfg, seed=0)
        samples = [random_sample(rng, cfg, target=float(i)) for i in range(3)]
        loss, _, preds = batch_loss_and_grads(model, samples)
        manual = float(np.mean((preds - np.array([0.0, 1.0, 2.0])) ** 2))
        assert loss == pytest.approx(manual, rel=1e-12)

    def test_empty_batch_rejected(self):
        model = init_model(small_config(), seed=0)
        with pytest.raises(ValueError):
            batch_loss_and_grads(model, [])

    def test_batch_grads_sum_of_per_sample(self):
        rng = np.random.default_rng(19)
        cfg = small_config()
        model = init_model(cfg, seed=0)
        samples = [random_sample(rng, cfg, target=1.0) for _ in range(2)]
        _, batch_grads, preds = batch_loss_and_grads(model, samples)
        manual = None
        for i, s in enumerate(samples):
            _, cache = forward_sample(model, s)
            manual, _ = backward_sample(
                model, cache, 2.0 * (preds[i] - s.target) / 2, manual
            )
        for name in batch_grads:
            assert np.allclose(batch_grads[name], manual[name], atol=1e-12), name


class TestCheckpoint:
    def quantized(self, model):
        for name in model.params:
            model.params[name] = (
                model.params[name].astype(np.float32).astype(np.float64)
            )
        return model

    def test_round_trip(self, tmp_path):
        cfg = small_config(use_pos_encoding=False)
        model = self.quantized(init_model(cfg, seed=7))
        path = tmp_path / "model.spanet"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert loaded.cfg == cfg
        assert set(loaded.params) == set(model.params)
        for name in model.params:
            assert np.array_equal(loaded.params[name], model.params[name]), name
        assert loaded.params["pix.embed.w"].dtype == np.float64

    def test_predictions_survive_round_trip(self, tmp_path):
        rng = np.random.default_rng(20)
        cfg = small_config()
        model = self.quantized(init_model(cfg, seed=8))
        sample = random_sample(rng, cfg)
        before, _ = forward_sample(model, sample)
        path = tmp_path / "model.spanet"
        save_checkpoint(model, path)
        after, _ = forward_sample(load_checkpoint(path), sample)
        assert after == before

    def test_bad_magic_rejected(self, tmp_path):
        model = init_model(small_config(), seed=0)
        path = tmp_path / "model.spanet"
        save_checkpoint(model, path)
        blob = path.read_bytes()
        bad = tmp_path / "bad.spanet"
        bad.write_bytes(b"SPANET99" + blob[8:])
        with pytest.raises(DataError):
            load_checkpoint(bad)

    def test_truncation_rejected(self, tmp_path):
        model = init_model(small_config(), seed=0)
        path = tmp_path / "model.spanet"
        save_checkpoint(model, path)
        blob = path.read_bytes()
        cut = tmp_path / "cut.spanet"
        cut.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(DataError):
            load_checkpoint(cut)

    def test_garbage_rejected(self, tmp_path):
        path = tmp_path / "junk.spanet"
        path.write_bytes(b"\x00" * 64)
        with pytest.raises(DataError):
            load_checkpoint(path)
