import numpy as np
import pytest
import torch

from mipslice.mip import MipImage
from mipslice.volume import Volume3D


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_volume():
    data = np.zeros((16, 8, 8), dtype=np.float32)
    data[5, 3, 4] = 700.0
    return Volume3D(data=data, spacing=(1.0, 1.0, 2.5), id="small")


def make_int8_image(height=64, width=48, seed=0, view="frontal", source_id="img"):
    rng = np.random.default_rng(seed)
    pixels = rng.integers(-127, 128, size=(height, width), dtype=np.int16)
    return MipImage(
        pixels=pixels,
        spacing=(1.0, 1.0),
        intensity_domain="int8",
        view=view,
        source_id=source_id,
    )


@pytest.fixture
def int8_image():
    return make_int8_image()


class StubMapModel(torch.nn.Module):
    """FCN stand-in that returns a fixed confidence map regardless of input."""

    def __init__(self, values: np.ndarray, variant: str, total_downsample: int = 64):
        super().__init__()
        self.values = np.asarray(values, dtype=np.float32)
        self.variant = variant
        self.total_downsample = total_downsample
        self._weight = torch.nn.Parameter(torch.zeros(1))

    def forward(self, x):
        h, w = x.shape[2], x.shape[3]
        if self.variant == "l3unet2d":
            out = np.zeros((h, w), dtype=np.float32)
            src = self.values[: h, : w]
            out[: src.shape[0], : src.shape[1]] = src
            return torch.from_numpy(out)[None, None] + 0 * self._weight
        out = np.zeros(h, dtype=np.float32)
        src = self.values[:h]
        out[: src.shape[0]] = src
        return torch.from_numpy(out)[None] + 0 * self._weight
