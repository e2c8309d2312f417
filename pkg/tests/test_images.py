"""Tests for pixel containers, grayscale conversion, and summed-area tables."""

from __future__ import annotations

import numpy as np
import pytest

from pqi.errors import DecodeError
from pqi.images import (
    GrayImage,
    IntegralImage,
    Rect,
    RgbImage,
    build_integral,
    integral_array,
    load_image,
    rect_sum,
    save_png,
    to_grayscale,
)


class TestRect:
    def test_area_is_inclusive(self):
        assert Rect(0, 0, 0, 0).area == 1
        assert Rect(2, 3, 4, 5).area == 9

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            Rect(3, 0, 2, 0)
        with pytest.raises(ValueError):
            Rect(0, 5, 0, 4)

    def test_clamped_inside_is_identity(self):
        r = Rect(1, 1, 3, 3)
        assert r.clamped(10, 10) == r

    def test_clamped_trims_edges(self):
        assert Rect(-5, -5, 20, 20).clamped(8, 6) == Rect(0, 0, 7, 5)

    def test_clamped_outside_is_none(self):
        assert Rect(10, 10, 12, 12).clamped(8, 8) is None
        assert Rect(-4, 0, -1, 5).clamped(8, 8) is None


class TestContainers:
    def test_rgb_validation(self):
        with pytest.raises(ValueError):
            RgbImage(np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(ValueError):
            RgbImage(np.zeros((4, 4, 3), dtype=np.float64))
        img = RgbImage(np.zeros((4, 6, 3), dtype=np.uint8))
        assert (img.width, img.height) == (6, 4)

    def test_gray_validation(self):
        with pytest.raises(ValueError):
            GrayImage(np.zeros((4, 4, 3), dtype=np.uint8))
        g = GrayImage(np.zeros((2, 5), dtype=np.uint8))
        assert (g.width, g.height) == (5, 2)

    def test_containers_are_read_only(self):
        img = RgbImage(np.zeros((2, 2, 3), dtype=np.uint8))
        with pytest.raises(ValueError):
            img.data[0, 0, 0] = 1


class TestGrayscale:
    def test_primary_colors(self):
        def lum(r, g, b):
            data = np.zeros((1, 1, 3), dtype=np.uint8)
            data[0, 0] = (r, g, b)
            return int(to_grayscale(RgbImage(data)).data[0, 0])

        assert lum(255, 0, 0) == 76
        assert lum(0, 255, 0) == 150
        assert lum(0, 0, 255) == 29
        assert lum(255, 255, 255) == 255
        assert lum(0, 0, 0) == 0

    def test_equal_channels_are_fixed_points(self):
        vals = np.arange(256, dtype=np.uint8)
        data = np.stack([vals, vals, vals], axis=-1).reshape(16, 16, 3)
        gray = to_grayscale(RgbImage(data))
        assert np.array_equal(gray.data, data[:, :, 0])

    def test_monotone_in_each_channel(self):
        rng = np.random.default_rng(7)
        base = rng.integers(0, 200, size=(8, 8, 3), dtype=np.uint8)
        brighter = (base.astype(np.int64) + 40).clip(0, 255).astype(np.uint8)
        g0 = to_grayscale(RgbImage(base)).data.astype(np.int64)
        g1 = to_grayscale(RgbImage(brighter)).data.astype(np.int64)
        assert np.all(g1 >= g0)


class TestIntegral:
    def test_dtype_rules(self):
        assert integral_array(np.ones((2, 2), dtype=np.uint8)).dtype == np.uint64
        assert integral_array(np.ones((2, 2), dtype=np.float32)).dtype == np.float64

    def test_known_table(self):
        values = np.array([[1, 2], [3, 4]], dtype=np.uint8)
        table = integral_array(values)
        assert np.array_equal(table, np.array([[1, 3], [4, 10]]))

    def test_rejects_non_2d(self):
        with pytest.raises(ValueError):
            integral_array(np.ones((2, 2, 3), dtype=np.uint8))

    def test_rect_sum_matches_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            h = int(rng.integers(1, 20))
            w = int(rng.integers(1, 20))
            values = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
            ii = build_integral(GrayImage(values))
            for _ in range(10):
                x0 = int(rng.integers(0, w))
                x1 = int(rng.integers(x0, w))
                y0 = int(rng.integers(0, h))
                y1 = int(rng.integers(y0, h))
                r = Rect(x0, y0, x1, y1)
                expected = int(values[y0 : y1 + 1, x0 : x1 + 1].sum(dtype=np.int64))
                assert rect_sum(ii, r) == expected

    def test_rect_sum_returns_python_int_for_integer_tables(self):
        ii = build_integral(GrayImage(np.full((3, 3), 9, dtype=np.uint8)))
        total = rect_sum(ii, Rect(0, 0, 2, 2))
        assert isinstance(total, int)
        assert total == 81

    def test_rect_sum_clamps_and_misses(self):
        values = np.arange(12, dtype=np.uint8).reshape(3, 4)
        ii = build_integral(GrayImage(values))
        assert rect_sum(ii, Rect(-10, -10, 50, 50)) == int(values.sum())
        assert rect_sum(ii, Rect(100, 100, 120, 120)) == 0

    def test_rect_sum_no_overflow_at_peak_intensity(self):
        values = np.full((64, 64), 255, dtype=np.uint8)
        ii = build_integral(GrayImage(values))
        assert rect_sum(ii, Rect(0, 0, 63, 63)) == 255 * 64 * 64

    def test_float_tables_supported(self):
        rng = np.random.default_rng(3)
        values = rng.random((6, 5))
        ii = build_integral(values)
        got = rect_sum(ii, Rect(1, 2, 4, 4))
        expected = values[2:5, 1:5].sum()
        assert got == pytest.approx(expected, abs=1e-9)

    def test_integral_image_wrapper_validation(self):
        with pytest.raises(ValueError):
            IntegralImage(np.ones((3,), dtype=np.uint64))


class TestPngIo:
    def test_rgb_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        data = rng.integers(0, 256, size=(9, 7, 3), dtype=np.uint8)
        path = tmp_path / "img.png"
        save_png(data, path)
        loaded = load_image(path)
        assert np.array_equal(loaded.data, data)

    def test_gray_png_loads_as_rgb(self, tmp_path):
        data = np.arange(64, dtype=np.uint8).reshape(8, 8)
        path = tmp_path / "gray.png"
        save_png(data, path)
        loaded = load_image(path)
        assert loaded.data.shape == (8, 8, 3)
        assert np.array_equal(loaded.data[:, :, 0], data)

    def test_sixteen_bit_png_rejected(self, tmp_path):
        data = np.full((4, 4), 1000, dtype=np.uint16)
        path = tmp_path / "deep.png"
        save_png(data, path)
        with pytest.raises(DecodeError):
            load_image(path)

    def test_garbage_file_rejected(self, tmp_path):
        path = tmp_path / "junk.png"
        path.write_bytes(b"this is not a png")
        with pytest.raises(DecodeError):
            load_image(path)

    def test_missing_file_raises_file_not_found(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "absent.png")

    def test_save_png_rejects_unsupported(self, tmp_path):
        with pytest.raises(ValueError):
            save_png(np.zeros((2, 2), dtype=np.float64), tmp_path / "x.png")
