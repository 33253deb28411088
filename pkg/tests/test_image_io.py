"""PNG round trips, mean-subtraction preprocessing, bilinear resizing."""

import numpy as np
import pytest
from PIL import Image

from stylemmd.image_io import (
    RgbImage,
    fit_long_side,
    load_png,
    postprocess,
    preprocess,
    resize_bilinear,
    save_png,
)


def solid(r, g, b, w=4, h=3):
    px = np.zeros((h, w, 3), dtype=np.uint8)
    px[:, :] = (r, g, b)
    return RgbImage(px)


class TestPreprocess:
    def test_solid_gray_shifts_blue_channel(self):
        t = preprocess(solid(128, 128, 128))
        assert t.shape == (1, 3, 3, 4)
        assert np.allclose(t[0, 0], 128 - 103.939)  # channel 0 is B

    def test_white_pixel_bgr_order(self):
        t = preprocess(solid(255, 255, 255, w=1, h=1))
        assert t[0, :, 0, 0] == pytest.approx([151.061, 138.221, 131.32])

    def test_round_trip_every_8bit_value(self):
        ramp = np.arange(256, dtype=np.uint8)
        px = np.stack([ramp, ramp[::-1], (np.arange(256) * 7 % 256).astype(np.uint8)], axis=-1)
        img = RgbImage(px.reshape(16, 16, 3))
        assert np.array_equal(postprocess(preprocess(img)).pixels, img.pixels)


class TestPostprocess:
    def test_zero_tensor_gives_rounded_means(self):
        img = postprocess(np.zeros((1, 3, 2, 2)))
        assert img.pixels[0, 0].tolist() == [124, 117, 104]

    def test_out_of_range_clamps(self):
        t = np.zeros((1, 3, 1, 1))
        t[0, 0, 0, 0] = 1e6
        t[0, 1, 0, 0] = -1e6
        px = postprocess(t).pixels[0, 0]
        assert px[2] == 255  # blue blown out
        assert px[1] == 0  # green clamped at the floor

    def test_rounds_half_away_from_zero(self):
        t = np.zeros((1, 3, 1, 1))
        t[0, 0, 0, 0] = 0.5 - 103.939 + 103.0  # reconstructs to exactly 103.5
        px = postprocess(t).pixels[0, 0]
        assert px[2] == 104

    def test_wrong_dims_rejected(self):
        with pytest.raises(ValueError):
            postprocess(np.zeros((1, 4, 2, 2)))


class TestResize:
    def test_same_size_is_identity(self):
        rng = np.random.default_rng(0)
        img = RgbImage(rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8))
        assert np.array_equal(resize_bilinear(img, 7, 5).pixels, img.pixels)

    def test_two_pixel_upsample_is_monotone(self):
        img = RgbImage(np.array([[[0, 0, 0], [255, 255, 255]]], dtype=np.uint8))
        out = resize_bilinear(img, 4, 1)
        row = out.pixels[0, :, 0].astype(int)
        assert row[0] == 0 and row[-1] == 255
        assert (np.diff(row) >= 0).all()

    def test_solid_color_stays_solid(self):
        img = solid(12, 200, 77)
        for w, h in ((1, 1), (3, 9), (10, 2)):
            out = resize_bilinear(img, w, h)
            assert (out.pixels == (12, 200, 77)).all()

    def test_fit_long_side_caps_but_never_upscales(self):
        small = solid(1, 2, 3, w=10, h=6)
        assert fit_long_side(small, 512).pixels.shape == (6, 10, 3)
        big = solid(1, 2, 3, w=100, h=40)
        capped = fit_long_side(big, 50)
        assert capped.width == 50
        assert capped.height == 20


class TestPngIO:
    def test_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        img = RgbImage(rng.integers(0, 256, size=(9, 11, 3), dtype=np.uint8))
        path = tmp_path / "img.png"
        save_png(img, path)
        again = load_png(path)
        assert np.array_equal(again.pixels, img.pixels)

    def test_rgba_alpha_is_dropped(self, tmp_path):
        rgba = np.zeros((4, 4, 4), dtype=np.uint8)
        rgba[..., 0] = 10
        rgba[..., 1] = 20
        rgba[..., 2] = 30
        rgba[..., 3] = 128
        path = tmp_path / "rgba.png"
        Image.fromarray(rgba, mode="RGBA").save(path)
        img = load_png(path)
        assert img.pixels.shape == (4, 4, 3)
        assert (img.pixels == (10, 20, 30)).all()
