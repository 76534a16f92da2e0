import numpy as np
import pytest
import torch

from mipslice.errors import ShapeError
from mipslice.models import (
    ModelConfig,
    VARIANT_1D,
    VARIANT_2D,
    VARIANT_BASELINE,
    VARIANT_BASELINE_DUAL,
    build_baseline_regressor,
    build_l3unet_1d,
    build_l3unet_2d,
    build_model,
    count_parameters,
    load_checkpoint,
    save_checkpoint,
)

PAPER_COUNT_2D = 8_493_537
PAPER_COUNT_1D = 6_189_025

tiny_cfg_2d = ModelConfig(variant=VARIANT_2D, depth=2, base_channels=4)
tiny_cfg_1d = ModelConfig(variant=VARIANT_1D, depth=2, base_channels=4)


@pytest.fixture(scope="module")
def unet2d():
    model = build_l3unet_2d()
    model.eval()
    return model


@pytest.fixture(scope="module")
def unet1d():
    model = build_l3unet_1d()
    model.eval()
    return model


class TestShapes:
    def test_2d_output_matches_input(self, unet2d):
        x = torch.randn(1, 1, 256, 384)
        with torch.no_grad():
            out = unet2d(x)
        assert tuple(out.shape) == (1, 1, 256, 384)
        assert out.min() > 0 and out.max() < 1

    def test_2d_fcn_any_divisible_size(self, unet2d):
        with torch.no_grad():
            assert tuple(unet2d(torch.randn(1, 1, 448, 192)).shape) == (1, 1, 448, 192)

    def test_1d_output_is_height(self, unet1d):
        x = torch.randn(1, 1, 256, 384)
        with torch.no_grad():
            out = unet1d(x)
        assert tuple(out.shape) == (1, 256)
        assert out.min() > 0 and out.max() < 1

    def test_indivisible_input_rejected(self, unet2d, unet1d):
        x = torch.randn(1, 1, 250, 384)
        with pytest.raises(ShapeError):
            unet2d(x)
        with pytest.raises(ShapeError):
            unet1d(x)

    def test_random_divisible_sizes(self):
        model = build_l3unet_1d(tiny_cfg_1d)
        model.eval()
        factor = model.total_downsample
        rng = np.random.default_rng(3)
        for _ in range(3):
            h = int(rng.integers(1, 5)) * factor
            w = int(rng.integers(1, 5)) * factor
            with torch.no_grad():
                out = model(torch.randn(1, 1, h, w))
            assert tuple(out.shape) == (1, h)


class TestParameterCounts:
    def test_single_conv_count(self):
        conv = torch.nn.Conv2d(1, 8, kernel_size=3)
        assert count_parameters(conv) == 3 * 3 * 1 * 8 + 8 == 80

    def test_2d_within_band(self, unet2d):
        count = count_parameters(unet2d)
        assert abs(count - PAPER_COUNT_2D) / PAPER_COUNT_2D <= 0.25

    def test_1d_within_band(self, unet1d):
        count = count_parameters(unet1d)
        assert abs(count - PAPER_COUNT_1D) / PAPER_COUNT_1D <= 0.25

    def test_1d_smaller_than_2d(self, unet1d, unet2d):
        assert count_parameters(unet1d) < count_parameters(unet2d)


class TestBaseline:
    cfg = ModelConfig(variant=VARIANT_BASELINE, baseline_width_mult=0.125, baseline_fc_units=32)
    dual_cfg = ModelConfig(
        variant=VARIANT_BASELINE_DUAL, baseline_width_mult=0.125, baseline_fc_units=32
    )

    def test_single_output_scalar(self):
        model = build_baseline_regressor(self.cfg)
        model.eval()
        with torch.no_grad():
            out = model(torch.randn(2, 1, 100, 512))
        assert tuple(out.shape) == (2,)

    def test_dual_output_with_probability(self):
        model = build_baseline_regressor(self.dual_cfg)
        model.eval()
        with torch.no_grad():
            out = model(torch.randn(3, 1, 100, 512))
        assert tuple(out.shape) == (3, 2)
        assert torch.all((out[:, 1] > 0) & (out[:, 1] < 1))

    def test_wrong_crop_rejected(self):
        model = build_baseline_regressor(self.cfg)
        with pytest.raises(ShapeError):
            model(torch.randn(1, 1, 101, 512))

    def test_non_baseline_variant_rejected(self):
        with pytest.raises(ValueError):
            build_baseline_regressor(ModelConfig(variant=VARIANT_2D))


class TestDeterminism:
    def test_eval_forward_repeatable(self):
        model = build_l3unet_2d(tiny_cfg_2d)
        model.eval()
        x = torch.randn(1, 1, 64, 64)
        with torch.no_grad():
            a, b = model(x), model(x)
        assert torch.allclose(a, b, atol=1e-7)

    @pytest.mark.xfail(
        reason="global width max-pool does not commute with asymmetric conv kernels;"
        " horizontal-flip invariance only emerges with flip augmentation",
        strict=True,
    )
    def test_1d_flip_invariance_on_random_weights(self):
        torch.manual_seed(0)
        model = build_l3unet_1d(tiny_cfg_1d)
        model.eval()
        x = torch.randn(1, 1, 64, 64)
        with torch.no_grad():
            a = model(x)
            b = model(torch.flip(x, dims=[3]))
        assert torch.allclose(a, b, atol=1e-5)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = build_l3unet_1d(tiny_cfg_1d)
        model.eval()
        save_checkpoint(model, tmp_path / "model.pt", epoch=3, training_config={"lr": 1e-3})
        loaded = load_checkpoint(tmp_path / "model.pt")
        assert loaded.variant == VARIANT_1D
        x = torch.randn(1, 1, 32, 32)
        with torch.no_grad():
            torch.testing.assert_close(model(x), loaded(x))

    def test_manifest_contents(self, tmp_path):
        import json

        model = build_baseline_regressor(self.make_cfg())
        save_checkpoint(model, tmp_path / "m.pt", epoch=1)
        manifest = json.loads((tmp_path / "m.json").read_text())
        assert manifest["variant"] == VARIANT_BASELINE
        assert manifest["parameter_count"] == count_parameters(model)
        rebuilt = load_checkpoint(tmp_path / "m.pt")
        assert rebuilt.crop == model.crop

    @staticmethod
    def make_cfg():
        return ModelConfig(
            variant=VARIANT_BASELINE, baseline_width_mult=0.125, baseline_fc_units=16
        )


def test_build_model_dispatch():
    assert build_model(tiny_cfg_2d).variant == VARIANT_2D
    assert build_model(tiny_cfg_1d).variant == VARIANT_1D
    with pytest.raises(ValueError):
        build_model(ModelConfig(variant="nope"))
