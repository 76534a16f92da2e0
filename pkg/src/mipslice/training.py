"""Training loop: random crops, annealed confidence-map targets, L2 loss, Adam.

Crops are sampled uniformly along the image height and centered along the
width. Crops that miss the annotated slice are kept as negatives with an
all-zero target map, so the fully-convolutional variants also learn from
regions that contain no target. The baseline regressor trains on positive
crops only (single output) or on positive and negative crops with a
presence flag (dual output).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .augment import AugmentConfig, augment
from .errors import ShapeError
from .mip import INT8_RANGE, MipImage
from .models import (
    VARIANT_1D,
    VARIANT_2D,
    VARIANT_BASELINE,
    VARIANT_BASELINE_DUAL,
    ModelConfig,
)
from .targets import make_confidence_map_1d, make_confidence_map_2d, sigma_schedule

PAD_VALUE = INT8_RANGE[0]


@dataclass(frozen=True)
class TrainConfig:
    crop_h: int = 256
    crop_w: int = 384
    batch_size: int = 8
    epochs: int = 50
    lr: float = 1e-3
    sigma_start: float = 10.0
    sigma_end: float = 1.5
    plateau_half_width: int = 50
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    @staticmethod
    def for_variant(variant: str, **overrides) -> "TrainConfig":
        """Per-variant defaults: batch 5 (2D), 8 (1D); baseline crops 100x512,
        lr 1e-5, batch 12."""
        defaults: dict = {}
        if variant == VARIANT_2D:
            defaults = {"batch_size": 5}
        elif variant == VARIANT_1D:
            defaults = {"batch_size": 8}
        elif variant in (VARIANT_BASELINE, VARIANT_BASELINE_DUAL):
            defaults = {"crop_h": 100, "crop_w": 512, "lr": 1e-5, "batch_size": 12}
        defaults.update(overrides)
        return TrainConfig(**defaults)


@dataclass
class TrainHistory:
    epochs: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    val_errors_mm: list[float] = field(default_factory=list)
    sigmas: list[float] = field(default_factory=list)

    def append(self, epoch, loss, val_error, sigma):
        self.epochs.append(epoch)
        self.losses.append(loss)
        self.val_errors_mm.append(val_error)
        self.sigmas.append(sigma)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "loss", "val_error_mm", "sigma"])
            for row in zip(self.epochs, self.losses, self.val_errors_mm, self.sigmas):
                writer.writerow([row[0], f"{row[1]:.8f}", f"{row[2]:.4f}", f"{row[3]:.6f}"])


def loss_l2(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Sum of squared differences per sample, averaged over the batch.

    Inputs are (B, *spatial); a 1D tensor is treated as one unbatched map.
    """
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    diff = (pred - target) ** 2
    if diff.ndim <= 1:
        return diff.sum()
    return diff.flatten(1).sum(dim=1).mean()


def sample_crop(img: MipImage, y_true: float, crop_h: int, crop_w: int, rng):
    """Cut a (crop_h, crop_w) window: random vertical offset, centered in x.

    Returns (crop pixels, y_local or None, vertical offset). y_local is None
    when the annotated row falls outside the window.
    """
    pixels = img.pixels
    h, w = pixels.shape
    if crop_h < 1 or crop_w < 1:
        raise ValueError("crop dims must be >= 1")

    if w < crop_w:  # pad symmetrically to the crop width
        pad = crop_w - w
        left = pad // 2
        pixels = np.pad(
            pixels, ((0, 0), (left, pad - left)), constant_values=PAD_VALUE
        )
        w = crop_w
    if h < crop_h:
        pixels = np.pad(pixels, ((0, crop_h - h), (0, 0)), constant_values=PAD_VALUE)
        h = crop_h

    offset = 0 if h == crop_h else int(rng.integers(0, h - crop_h + 1))
    left = w // 2 - crop_w // 2
    crop = pixels[offset : offset + crop_h, left : left + crop_w]
    y_local = y_true - offset
    if not 0 <= y_local < crop_h:
        y_local = None
    return crop, y_local, offset


def sample_positive_crop(img: MipImage, y_true: float, crop_h: int, crop_w: int, rng):
    """Like sample_crop but the vertical offset always keeps y_true in view."""
    h = max(img.pixels.shape[0], crop_h)
    lo = max(0, int(math.ceil(y_true)) - crop_h + 1)
    hi = min(h - crop_h, int(y_true))
    if hi < lo:
        lo = hi = max(0, min(int(y_true), h - crop_h))
    offset = int(rng.integers(lo, hi + 1))
    crop, y_local, _ = _crop_at(img, offset, crop_h, crop_w)
    return crop, y_true - offset, offset


def _crop_at(img: MipImage, offset: int, crop_h: int, crop_w: int):
    pixels = img.pixels
    h, w = pixels.shape
    if w < crop_w:
        pad = crop_w - w
        left = pad // 2
        pixels = np.pad(pixels, ((0, 0), (left, pad - left)), constant_values=PAD_VALUE)
        w = crop_w
    if h < offset + crop_h:
        pixels = np.pad(
            pixels, ((0, offset + crop_h - h), (0, 0)), constant_values=PAD_VALUE
        )
    left = w // 2 - crop_w // 2
    return pixels[offset : offset + crop_h, left : left + crop_w], None, offset


def _to_input(crops: list[np.ndarray]) -> torch.Tensor:
    x = np.stack(crops).astype(np.float32) / 127.0
    return torch.from_numpy(x).unsqueeze(1)


def _fcn_targets(variant, y_locals, cfg: TrainConfig, sigma):
    maps = []
    for y_local in y_locals:
        if y_local is None:
            shape = (cfg.crop_h, cfg.crop_w) if variant == VARIANT_2D else (cfg.crop_h,)
            maps.append(np.zeros(shape))
        elif variant == VARIANT_2D:
            maps.append(
                make_confidence_map_2d(
                    cfg.crop_h,
                    cfg.crop_w,
                    int(round(y_local)),
                    sigma,
                    v=cfg.plateau_half_width,
                )
            )
        else:
            maps.append(make_confidence_map_1d(cfg.crop_h, int(round(y_local)), sigma))
    return torch.from_numpy(np.stack(maps).astype(np.float32))


def _baseline_loss(model, x, y_locals, crop_h):
    out = model(x)
    present = torch.tensor([y is not None for y in y_locals])
    y = torch.tensor(
        [0.0 if v is None else float(v) for v in y_locals], dtype=torch.float32
    )
    if model.dual:
        pred_y, pred_p = out[:, 0], out[:, 1]
        reg = ((pred_y[present] - y[present]) / crop_h) ** 2
        reg_loss = reg.sum() / max(int(present.sum()), 1)
        bce = torch.nn.functional.binary_cross_entropy(
            pred_p.clamp(1e-6, 1 - 1e-6), present.float()
        )
        return reg_loss + bce
    # single output: positives only
    reg = ((out[present] - y[present]) / crop_h) ** 2
    return reg.sum() / max(int(present.sum()), 1)


def train(model, dataset, cfg: TrainConfig):
    """Run the full training protocol and return (best model, history).

    dataset: list of (MipImage, y_mm) with y in normalized mm (= px).
    The checkpoint with the lowest validation localization error wins;
    10% of the images are held out for that selection.
    """
    from .inference import predict  # local import to avoid a cycle

    if not dataset:
        raise ValueError("dataset must not be empty")
    variant = model.variant
    is_fcn = variant in (VARIANT_1D, VARIANT_2D)
    if is_fcn and (cfg.crop_h % model.total_downsample or cfg.crop_w % model.total_downsample):
        raise ShapeError(
            f"crop dims ({cfg.crop_h}, {cfg.crop_w}) must be divisible by"
            f" the model downsample factor {model.total_downsample}"
        )

    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)

    order = rng.permutation(len(dataset))
    n_val = int(round(len(dataset) * cfg.val_fraction)) if len(dataset) >= 5 else 0
    val_idx = order[:n_val]
    train_idx = order[n_val:]
    train_set = [dataset[i] for i in train_idx]
    val_set = [dataset[i] for i in val_idx]

    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    history = TrainHistory()
    best_err = math.inf
    best_state = {k: v.clone() for k, v in model.state_dict().items()}
    positive_only = variant == VARIANT_BASELINE

    for epoch in range(cfg.epochs):
        sigma = sigma_schedule(epoch, cfg.epochs, cfg.sigma_start, cfg.sigma_end)
        model.train()
        epoch_losses = []
        perm = rng.permutation(len(train_set))
        for start in range(0, len(perm), cfg.batch_size):
            batch = [train_set[i] for i in perm[start : start + cfg.batch_size]]
            crops, y_locals = [], []
            for img, y_mm in batch:
                aug_img, aug_y, _ = augment(img, y_mm, cfg.augment, rng)
                if positive_only:
                    crop, y_local, _ = sample_positive_crop(
                        aug_img, aug_y, cfg.crop_h, cfg.crop_w, rng
                    )
                else:
                    crop, y_local, _ = sample_crop(
                        aug_img, aug_y, cfg.crop_h, cfg.crop_w, rng
                    )
                crops.append(crop)
                y_locals.append(y_local)
            x = _to_input(crops)
            optimizer.zero_grad()
            if is_fcn:
                target = _fcn_targets(variant, y_locals, cfg, sigma)
                out = model(x)
                if variant == VARIANT_2D:
                    out = out.squeeze(1)
                loss = loss_l2(out, target)
            else:
                loss = _baseline_loss(model, x, y_locals, cfg.crop_h)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss {loss.item()} at epoch {epoch}; "
                    "lower the learning rate or check the inputs"
                )
            loss.backward()
            optimizer.step()
            epoch_losses.append(float(loss.item()))

        mean_loss = float(np.mean(epoch_losses)) if epoch_losses else math.nan
        if val_set and is_fcn:
            model.eval()
            errs = [abs(predict(model, img).y_mm - y_mm) for img, y_mm in val_set]
            val_err = float(np.median(errs))
        else:
            val_err = mean_loss
        history.append(epoch, mean_loss, val_err, sigma)
        if val_err <= best_err:
            best_err = val_err
            best_state = {k: v.clone() for k, v in model.state_dict().items()}

    model.load_state_dict(best_state)
    model.eval()
    return model, history


def load_dataset(data_dir, view: str = "frontal", include_ambiguous: bool = False):
    """Assemble (MipImage, y_mm) pairs from a dataset directory.

    Expects MIP PNGs (in `data_dir` or `data_dir/mips`) and an
    `annotations.csv`; per-image ground truth is the floor of the
    annotator mean. Ambiguous images are skipped unless asked for.
    """
    from .mip import load_mip_png
    from .targets import merge_annotations, read_annotations_csv

    data_dir = Path(data_dir)
    mip_dir = data_dir / "mips" if (data_dir / "mips").is_dir() else data_dir
    ann_path = data_dir / "annotations.csv"
    if not ann_path.exists():
        raise FileNotFoundError(f"no annotations.csv under {data_dir}")
    merged = merge_annotations(read_annotations_csv(ann_path))
    suffix = "frontal" if view == "frontal" else "sagittal"
    samples = []
    for image_id, ann in sorted(merged.items()):
        if ann.ambiguous and not include_ambiguous:
            continue
        png = mip_dir / f"{image_id}_{suffix}.png"
        if not png.exists():
            continue
        samples.append((load_mip_png(png), ann.y_mm))
    return samples
