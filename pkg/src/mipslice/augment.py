"""Stochastic training-time transformations for MIP images.

Geometric transforms (flip, scale) move the label with the image;
intensity transforms (offset, drop-outs, over-exposures) leave it alone.
Slice-thickness simulation down-samples rows and up-samples back with
linear interpolation, mimicking thick-slice acquisitions up to 7 mm.
Every sampled parameter is returned so a draw can be replayed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .mip import INT8_RANGE, MipImage, resize_linear
from .volume import round_half_up


@dataclass(frozen=True)
class AugmentConfig:
    flip_h_prob: float = 0.5
    scale_range: tuple[float, float] = (0.8, 1.2)
    intensity_offset_range: tuple[float, float] = (-70, 70)
    piecewise_affine_prob: float = 0.5
    piecewise_affine_grid: int = 4
    piecewise_affine_sigma_px: float = 2.0
    dropout_prob: float = 0.5
    dropout_count_range: tuple[int, int] = (0, 3)
    dropout_size_range: tuple[int, int] = (10, 60)
    overexposure_prob: float = 0.5
    overexposure_count_range: tuple[int, int] = (0, 3)
    overexposure_size_range: tuple[int, int] = (10, 60)
    thickness_prob: float = 0.5
    max_simulated_thickness_mm: float = 7.0

    def __post_init__(self):
        if self.scale_range[0] <= 0:
            raise ValueError(f"scale range must be positive, got {self.scale_range}")
        if self.max_simulated_thickness_mm < 1:
            raise ValueError("simulated thickness must be >= 1 mm")


IDENTITY_CONFIG = AugmentConfig(
    flip_h_prob=0.0,
    scale_range=(1.0, 1.0),
    intensity_offset_range=(0, 0),
    piecewise_affine_prob=0.0,
    dropout_prob=0.0,
    overexposure_prob=0.0,
    thickness_prob=0.0,
)


def _area_downsample_rows(arr: np.ndarray, out_n: int) -> np.ndarray:
    """Average rows into out_n equal-height bins (exact area interpolation).

    Point sampling would drop thin bright rows entirely; a thick slice
    integrates everything inside its extent, so bins average instead.
    """
    in_n = arr.shape[0]
    t = in_n / out_n
    cumsum = np.vstack([np.zeros((1, arr.shape[1])), np.cumsum(arr, axis=0)])

    def integral(z):
        k = np.clip(np.floor(z).astype(int), 0, in_n)
        frac = (z - k)[:, None]
        partial = np.where(
            (k < in_n)[:, None], arr[np.minimum(k, in_n - 1)] * frac, 0.0
        )
        return cumsum[k] + partial

    z0 = np.arange(out_n) * t
    return (integral(z0 + t) - integral(z0)) / t


def simulate_thickness(img: MipImage, thickness_mm: float, rng=None) -> MipImage:
    """Down-sample rows by the thickness factor, then up-sample back (linear)."""
    if thickness_mm < 1:
        raise ValueError(f"thickness_mm must be >= 1, got {thickness_mm}")
    h, w = img.pixels.shape
    if thickness_mm == 1.0:
        return img
    coarse_h = max(round_half_up(h / thickness_mm), 1)
    coarse = _area_downsample_rows(img.pixels.astype(np.float64), coarse_h)
    restored = resize_linear(coarse, h, w)
    pixels = np.rint(restored).astype(np.int16) if img.intensity_domain == "int8" else restored
    return replace(img, pixels=pixels)


def _piecewise_affine(pixels: np.ndarray, grid: int, sigma_px: float, rng) -> np.ndarray:
    """Jitter a coarse control grid and warp by bilinear displacement lookup."""
    h, w = pixels.shape
    disp_r = rng.normal(0.0, sigma_px, size=(grid, grid))
    disp_c = rng.normal(0.0, sigma_px, size=(grid, grid))
    dense_r = resize_linear(disp_r, h, w)
    dense_c = resize_linear(disp_c, h, w)
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    src_r = np.clip(rows + dense_r, 0, h - 1)
    src_c = np.clip(cols + dense_c, 0, w - 1)
    r0 = np.floor(src_r).astype(int)
    c0 = np.floor(src_c).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = src_r - r0
    fc = src_c - c0
    p = pixels.astype(np.float64)
    out = (
        p[r0, c0] * (1 - fr) * (1 - fc)
        + p[r1, c0] * fr * (1 - fc)
        + p[r0, c1] * (1 - fr) * fc
        + p[r1, c1] * fr * fc
    )
    return out


def _paint_regions(pixels, count, size_range, value, rng):
    h, w = pixels.shape
    boxes = []
    for _ in range(count):
        rh = int(rng.integers(size_range[0], size_range[1] + 1))
        rw = int(rng.integers(size_range[0], size_range[1] + 1))
        if rh >= h or rw >= w:
            continue  # degenerate region, skip
        r = int(rng.integers(0, h - rh + 1))
        c = int(rng.integers(0, w - rw + 1))
        pixels[r : r + rh, c : c + rw] = value
        boxes.append((r, c, rh, rw))
    return boxes


def augment(img: MipImage, y_true: float, cfg: AugmentConfig, rng: np.random.Generator):
    """Apply one random draw of the augmentation set.

    Returns (augmented image, transformed label, record of applied params).
    """
    lo, hi = INT8_RANGE
    pixels = img.pixels.astype(np.float64)
    y = float(y_true)
    applied: dict = {}

    if rng.random() < cfg.flip_h_prob:
        pixels = pixels[:, ::-1].copy()
        applied["flip_h"] = True

    scale = float(rng.uniform(*cfg.scale_range))
    if scale != 1.0:
        h, w = pixels.shape
        out_h = max(round_half_up(h * scale), 1)
        out_w = max(round_half_up(w * scale), 1)
        pixels = resize_linear(pixels, out_h, out_w)
        y = float(round_half_up(scale * y))
        applied["scale"] = scale

    if rng.random() < cfg.piecewise_affine_prob:
        pixels = _piecewise_affine(
            pixels, cfg.piecewise_affine_grid, cfg.piecewise_affine_sigma_px, rng
        )
        applied["piecewise_affine_sigma_px"] = cfg.piecewise_affine_sigma_px

    offset = float(rng.uniform(*cfg.intensity_offset_range))
    if offset != 0.0:
        pixels = pixels + offset
        applied["intensity_offset"] = offset

    if rng.random() < cfg.dropout_prob:
        count = int(rng.integers(cfg.dropout_count_range[0], cfg.dropout_count_range[1] + 1))
        applied["dropout_boxes"] = _paint_regions(pixels, count, cfg.dropout_size_range, lo, rng)

    if rng.random() < cfg.overexposure_prob:
        count = int(
            rng.integers(cfg.overexposure_count_range[0], cfg.overexposure_count_range[1] + 1)
        )
        applied["overexposure_boxes"] = _paint_regions(
            pixels, count, cfg.overexposure_size_range, hi, rng
        )

    pixels = np.clip(np.rint(pixels), lo, hi).astype(np.int16)
    out = replace(img, pixels=pixels)

    if rng.random() < cfg.thickness_prob and cfg.max_simulated_thickness_mm > 1:
        thickness = float(rng.uniform(1.0, cfg.max_simulated_thickness_mm))
        out = simulate_thickness(out, thickness)
        applied["simulated_thickness_mm"] = thickness

    return out, y, applied
