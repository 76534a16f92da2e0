import numpy as np
import pytest

from mipslice.augment import AugmentConfig, IDENTITY_CONFIG, augment, simulate_thickness
from mipslice.mip import resize_linear
from mipslice.targets import make_confidence_map_1d
from mipslice.volume import round_half_up

from conftest import make_int8_image


class TestAugment:
    def test_identity_config_is_identity(self, int8_image, rng):
        out, y, applied = augment(int8_image, 31.0, IDENTITY_CONFIG, rng)
        np.testing.assert_array_equal(out.pixels, int8_image.pixels)
        assert y == 31.0
        assert applied == {}

    def test_flip_only_mirrors_and_keeps_row(self, int8_image, rng):
        cfg = AugmentConfig(
            flip_h_prob=1.0,
            scale_range=(1.0, 1.0),
            intensity_offset_range=(0, 0),
            piecewise_affine_prob=0.0,
            dropout_prob=0.0,
            overexposure_prob=0.0,
            thickness_prob=0.0,
        )
        out, y, applied = augment(int8_image, 20.0, cfg, rng)
        np.testing.assert_array_equal(out.pixels, int8_image.pixels[:, ::-1])
        assert y == 20.0
        assert applied == {"flip_h": True}

    def test_vertical_scale_moves_label(self, rng):
        img = make_int8_image(height=200, width=40)
        cfg = AugmentConfig(
            flip_h_prob=0.0,
            scale_range=(1.2, 1.2),
            intensity_offset_range=(0, 0),
            piecewise_affine_prob=0.0,
            dropout_prob=0.0,
            overexposure_prob=0.0,
            thickness_prob=0.0,
        )
        out, y, applied = augment(img, 100.0, cfg, rng)
        assert y == 120.0
        assert out.pixels.shape == (240, 48)
        # same resampler as the mip module
        expected = np.clip(
            np.rint(resize_linear(img.pixels.astype(float), 240, 48)), -127, 127
        )
        np.testing.assert_array_equal(out.pixels, expected)

    def test_scaled_label_matches_map_argmax(self, rng):
        img = make_int8_image(height=100, width=30)
        for scale in (0.8, 1.1):
            cfg = AugmentConfig(
                flip_h_prob=0.0,
                scale_range=(scale, scale),
                intensity_offset_range=(0, 0),
                piecewise_affine_prob=0.0,
                dropout_prob=0.0,
                overexposure_prob=0.0,
                thickness_prob=0.0,
            )
            y0 = 40.0
            out, y1, _ = augment(img, y0, cfg, rng)
            before = int(np.argmax(make_confidence_map_1d(100, int(y0), 3.0)))
            after = int(np.argmax(make_confidence_map_1d(out.pixels.shape[0], int(y1), 3.0)))
            assert abs(after - round_half_up(scale * before)) <= 1

    def test_deterministic_per_seed(self, int8_image):
        cfg = AugmentConfig()
        out1, y1, rec1 = augment(int8_image, 30.0, cfg, np.random.default_rng(77))
        out2, y2, rec2 = augment(int8_image, 30.0, cfg, np.random.default_rng(77))
        np.testing.assert_array_equal(out1.pixels, out2.pixels)
        assert y1 == y2 and rec1 == rec2

    def test_output_stays_in_int8_range(self, rng):
        cfg = AugmentConfig()
        for seed in range(10):
            img = make_int8_image(height=80, width=64, seed=seed)
            out, _, _ = augment(img, 40.0, cfg, np.random.default_rng(seed))
            assert out.pixels.min() >= -127 and out.pixels.max() <= 127
            assert np.issubdtype(out.pixels.dtype, np.integer)

    def test_intensity_offset_clamps(self, rng):
        img = make_int8_image(height=16, width=16)
        cfg = AugmentConfig(
            flip_h_prob=0.0,
            scale_range=(1.0, 1.0),
            intensity_offset_range=(200, 200),
            piecewise_affine_prob=0.0,
            dropout_prob=0.0,
            overexposure_prob=0.0,
            thickness_prob=0.0,
        )
        out, _, _ = augment(img, 5.0, cfg, rng)
        assert out.pixels.max() == 127


class TestSimulateThickness:
    def test_unit_thickness_is_identity(self, int8_image):
        out = simulate_thickness(int8_image, 1.0)
        np.testing.assert_array_equal(out.pixels, int8_image.pixels)

    def test_constant_image_unchanged(self):
        img = make_int8_image(height=50, width=20)
        const = img.pixels * 0 + 17
        img = type(img)(
            pixels=const,
            spacing=img.spacing,
            intensity_domain="int8",
            view=img.view,
        )
        for t in (2.0, 4.5, 7.0):
            out = simulate_thickness(img, t)
            np.testing.assert_array_equal(out.pixels, const)

    def test_bright_row_spreads_but_argmax_stays(self):
        pixels = np.full((60, 20), -127, dtype=np.int16)
        pixels[30, :] = 127
        img = make_int8_image(height=60, width=20)
        img = type(img)(
            pixels=pixels, spacing=(1, 1), intensity_domain="int8", view="frontal"
        )
        out = simulate_thickness(img, 4.0)
        profile = out.pixels[:, 0].astype(float)
        assert abs(int(np.argmax(profile)) - 30) <= 2
        spread_rows = int((profile > -127).sum())
        assert 2 <= spread_rows <= 10  # energy spread over ~thickness rows
        assert out.pixels.shape == img.pixels.shape

    def test_rejects_sub_unit_thickness(self, int8_image):
        with pytest.raises(ValueError):
            simulate_thickness(int8_image, 0.5)
