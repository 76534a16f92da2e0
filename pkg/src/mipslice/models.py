"""Network architectures: L3UNet-2D, L3UNet-1D, and the sliding-window baseline.

The two UNet variants share a 5-level encoder (3x3 conv, batch norm,
LeakyReLU 0.05; 2x2 pools between levels and a 4x4 pool at the bottom,
total downsample factor 64). The 2D decoder mirrors the encoder with
nearest-neighbor upsampling, skip concatenation, spatial dropout and a
closing 1x1 convolution per block. The 1D decoder first collapses every
skip tensor and the bottleneck over the width axis (global horizontal
max-pooling) and then uses 1D convolutions, yielding a length-H output.
Both heads end in a 1-channel 1x1 convolution with sigmoid.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
from torch import nn

from .errors import ShapeError

VARIANT_2D = "l3unet2d"
VARIANT_1D = "l3unet1d"
VARIANT_BASELINE = "baseline_regression"
VARIANT_BASELINE_DUAL = "baseline_regression_dual"

# VGG16 convolutional plan: channels between max-pools
_VGG16_PLAN = ((64, 64), (128, 128), (256, 256, 256), (512, 512, 512), (512, 512, 512))


@dataclass(frozen=True)
class ModelConfig:
    variant: str = VARIANT_1D
    depth: int = 5
    base_channels: int = 32
    leaky_relu_alpha: float = 0.05
    dropout_p: float = 0.25
    final_pool: int = 4
    # baseline-only knobs
    baseline_crop: tuple[int, int] = (100, 512)
    baseline_width_mult: float = 1.0
    baseline_fc_units: int = 256

    @property
    def total_downsample(self) -> int:
        return 2 ** (self.depth - 1) * self.final_pool

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(self.base_channels * 2**i for i in range(self.depth))


def _conv_unit(in_ch, out_ch, alpha):
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1),
        nn.BatchNorm2d(out_ch),
        nn.LeakyReLU(alpha),
    )


def _conv_unit_1d(in_ch, out_ch, alpha):
    return nn.Sequential(
        nn.Conv1d(in_ch, out_ch, kernel_size=3, padding=1),
        nn.BatchNorm1d(out_ch),
        nn.LeakyReLU(alpha),
    )


class _Encoder(nn.Module):
    """Shared down-sampling path; returns per-level skips plus pooled bottom."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.blocks = nn.ModuleList()
        self.pools = nn.ModuleList()
        in_ch = 1
        for lvl, out_ch in enumerate(cfg.channels):
            units = [_conv_unit(in_ch, out_ch, cfg.leaky_relu_alpha)]
            if lvl > 0:
                units.append(_conv_unit(out_ch, out_ch, cfg.leaky_relu_alpha))
            self.blocks.append(nn.Sequential(*units))
            pool = cfg.final_pool if lvl == cfg.depth - 1 else 2
            self.pools.append(nn.MaxPool2d(pool))
            in_ch = out_ch

    def forward(self, x):
        skips = []
        for block, pool in zip(self.blocks, self.pools):
            x = block(x)
            skips.append(x)
            x = pool(x)
        return skips, x


def _check_input(x, factor):
    if x.ndim != 4 or x.shape[1] != 1:
        raise ShapeError(f"expected input of shape (B, 1, H, W), got {tuple(x.shape)}")
    h, w = x.shape[2], x.shape[3]
    if h % factor or w % factor:
        raise ShapeError(
            f"input dims ({h}, {w}) must be divisible by the downsample factor {factor}"
        )


class L3UNet2D(nn.Module):
    """Fully-convolutional detector with a full-resolution 2D confidence map."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.config = cfg
        self.variant = VARIANT_2D
        self.total_downsample = cfg.total_downsample
        self.encoder = _Encoder(cfg)
        chans = cfg.channels
        self.ups = nn.ModuleList()
        self.convs = nn.ModuleList()
        self.fuses = nn.ModuleList()
        self.drops = nn.ModuleList()
        prev = chans[-1]
        for lvl in reversed(range(cfg.depth)):
            scale = cfg.final_pool if lvl == cfg.depth - 1 else 2
            self.ups.append(nn.Upsample(scale_factor=scale, mode="nearest"))
            self.convs.append(_conv_unit(prev, chans[lvl], cfg.leaky_relu_alpha))
            self.drops.append(nn.Dropout2d(cfg.dropout_p))
            self.fuses.append(
                nn.Sequential(
                    nn.Conv2d(2 * chans[lvl], chans[lvl], kernel_size=1),
                    nn.LeakyReLU(cfg.leaky_relu_alpha),
                )
            )
            prev = chans[lvl]
        self.head = nn.Conv2d(chans[0], 1, kernel_size=1)

    def forward(self, x):
        _check_input(x, self.total_downsample)
        skips, x = self.encoder(x)
        for i, lvl in enumerate(reversed(range(self.config.depth))):
            x = self.ups[i](x)
            x = self.convs[i](x)
            x = torch.cat([x, skips[lvl]], dim=1)
            x = self.drops[i](x)
            x = self.fuses[i](x)
        return torch.sigmoid(self.head(x))


class L3UNet1D(nn.Module):
    """UNet variant whose decoder works on width-collapsed 1D features."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.config = cfg
        self.variant = VARIANT_1D
        self.total_downsample = cfg.total_downsample
        self.encoder = _Encoder(cfg)
        chans = cfg.channels
        self.ups = nn.ModuleList()
        self.convs = nn.ModuleList()
        self.fuses = nn.ModuleList()
        self.drops = nn.ModuleList()
        prev = chans[-1]
        for lvl in reversed(range(cfg.depth)):
            scale = cfg.final_pool if lvl == cfg.depth - 1 else 2
            self.ups.append(nn.Upsample(scale_factor=scale, mode="nearest"))
            self.convs.append(_conv_unit_1d(prev, chans[lvl], cfg.leaky_relu_alpha))
            self.drops.append(nn.Dropout1d(cfg.dropout_p))
            self.fuses.append(
                nn.Sequential(
                    nn.Conv1d(2 * chans[lvl], chans[lvl], kernel_size=1),
                    nn.LeakyReLU(cfg.leaky_relu_alpha),
                )
            )
            prev = chans[lvl]
        self.head = nn.Conv1d(chans[0], 1, kernel_size=1)

    def forward(self, x):
        _check_input(x, self.total_downsample)
        skips, x = self.encoder(x)
        x = x.amax(dim=3)  # global horizontal max-pool on the bottleneck
        for i, lvl in enumerate(reversed(range(self.config.depth))):
            x = self.ups[i](x)
            x = self.convs[i](x)
            x = torch.cat([x, skips[lvl].amax(dim=3)], dim=1)
            x = self.drops[i](x)
            x = self.fuses[i](x)
        return torch.sigmoid(self.head(x)).squeeze(1)


class BaselineRegressor(nn.Module):
    """VGG16-style trunk with a dense head on a fixed 100x512 crop.

    Single-output: regressed row. Dual-output: (row, presence probability),
    letting the model train on crops without the target slice.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        if cfg.variant not in (VARIANT_BASELINE, VARIANT_BASELINE_DUAL):
            raise ValueError(f"not a baseline variant: {cfg.variant}")
        self.config = cfg
        self.variant = cfg.variant
        self.dual = cfg.variant == VARIANT_BASELINE_DUAL
        self.crop = tuple(cfg.baseline_crop)

        layers = []
        in_ch = 1
        h, w = self.crop
        for stage in _VGG16_PLAN:
            for ch in stage:
                out_ch = max(int(ch * cfg.baseline_width_mult), 4)
                layers += [nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1), nn.ReLU()]
                in_ch = out_ch
            layers.append(nn.MaxPool2d(2))
            h, w = h // 2, w // 2
        self.features = nn.Sequential(*layers)
        self.head = nn.Sequential(
            nn.Flatten(),
            nn.Linear(in_ch * h * w, cfg.baseline_fc_units),
            nn.ReLU(),
            nn.Linear(cfg.baseline_fc_units, 2 if self.dual else 1),
        )

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != 1 or tuple(x.shape[2:]) != self.crop:
            raise ShapeError(
                f"baseline expects input (B, 1, {self.crop[0]}, {self.crop[1]}),"
                f" got {tuple(x.shape)}"
            )
        out = self.head(self.features(x))
        if self.dual:
            return torch.stack([out[:, 0], torch.sigmoid(out[:, 1])], dim=1)
        return out[:, 0]


def build_l3unet_2d(cfg: ModelConfig | None = None) -> L3UNet2D:
    cfg = cfg or ModelConfig(variant=VARIANT_2D)
    return L3UNet2D(cfg)


def build_l3unet_1d(cfg: ModelConfig | None = None) -> L3UNet1D:
    cfg = cfg or ModelConfig(variant=VARIANT_1D)
    return L3UNet1D(cfg)


def build_baseline_regressor(cfg: ModelConfig | None = None) -> BaselineRegressor:
    cfg = cfg or ModelConfig(variant=VARIANT_BASELINE)
    return BaselineRegressor(cfg)


def build_model(cfg: ModelConfig) -> nn.Module:
    builders = {
        VARIANT_2D: build_l3unet_2d,
        VARIANT_1D: build_l3unet_1d,
        VARIANT_BASELINE: build_baseline_regressor,
        VARIANT_BASELINE_DUAL: build_baseline_regressor,
    }
    if cfg.variant not in builders:
        raise ValueError(f"unknown variant {cfg.variant!r}")
    return builders[cfg.variant](cfg)


def count_parameters(model: nn.Module) -> int:
    """Number of trainable scalars."""
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def config_hash(obj) -> str:
    """Stable short hash of a config-like mapping or dataclass."""
    if hasattr(obj, "__dataclass_fields__"):
        obj = asdict(obj)
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def save_checkpoint(model: nn.Module, path, epoch: int = 0, training_config=None) -> None:
    """Save weights plus a JSON manifest describing how to rebuild the model."""
    path = Path(path)
    torch.save(model.state_dict(), path)
    manifest = {
        "variant": model.variant,
        "config": asdict(model.config),
        "parameter_count": count_parameters(model),
        "training_config_hash": config_hash(training_config) if training_config else None,
        "epoch": epoch,
    }
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")


def load_checkpoint(path) -> nn.Module:
    """Rebuild a model from its manifest and load the saved weights."""
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    raw = dict(manifest["config"])
    for key in ("baseline_crop",):
        if key in raw and isinstance(raw[key], list):
            raw[key] = tuple(raw[key])
    cfg = ModelConfig(**raw)
    model = build_model(cfg)
    model.load_state_dict(torch.load(path, map_location="cpu", weights_only=True))
    model.eval()
    return model
