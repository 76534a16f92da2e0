"""Maximal intensity projection images and their preprocessing chain.

A volume becomes two 2D images: a frontal MIP (max over the
anterior-posterior axis) and a sagittal MIP restricted to a central
left-right band so the sacrum stays visible without the pelvis edges.
Both are then resampled to 1x1 mm pixels, windowed to [100, 1500] HU and
mapped to signed 8-bit [-127, 127].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, MetadataError
from .volume import Volume3D, round_half_up

HU_WINDOW = (100.0, 1500.0)
INT8_RANGE = (-127, 127)
DEFAULT_SAGITTAL_HALF_WIDTH_MM = 20.0

VIEW_FRONTAL = "frontal"
VIEW_SAGITTAL = "sagittal_restricted"


@dataclass(frozen=True)
class MipImage:
    """2D projected image with row/column spacing in mm."""

    pixels: np.ndarray
    spacing: tuple[float, float]  # (row_mm, col_mm)
    intensity_domain: str  # "hu" or "int8"
    view: str
    source_id: str = ""
    thickness_mm: float = 1.0  # native slice thickness of the source volume

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        if pixels.ndim != 2:
            raise FormatError(f"MIP image must be rank 2, got rank {pixels.ndim}")
        if min(pixels.shape) < 1:
            raise FormatError(f"H and W must be >= 1, got {pixels.shape}")
        if any(s <= 0 for s in self.spacing):
            raise MetadataError(f"pixel spacing must be positive, got {self.spacing}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def project_frontal(vol: Volume3D) -> MipImage:
    """MIP along the anterior-posterior axis; rows = slices, cols = left-right."""
    pixels = vol.data.max(axis=1)
    return MipImage(
        pixels=pixels,
        spacing=(vol.sz, vol.sx),
        intensity_domain="hu",
        view=VIEW_FRONTAL,
        source_id=vol.id,
        thickness_mm=vol.sz,
    )


def project_sagittal_restricted(
    vol: Volume3D, half_width_mm: float = DEFAULT_SAGITTAL_HALF_WIDTH_MM
) -> MipImage:
    """MIP along left-right, restricted to a central band of +-half_width_mm."""
    if half_width_mm <= 0:
        raise ValueError(f"half_width_mm must be positive, got {half_width_mm}")
    n = vol.data.shape[2]
    c = n // 2
    w = round_half_up(half_width_mm / vol.sx)
    lo = max(c - w, 0)
    hi = min(c + w, n - 1)
    pixels = vol.data[:, :, lo : hi + 1].max(axis=2)
    return MipImage(
        pixels=pixels,
        spacing=(vol.sz, vol.sy),
        intensity_domain="hu",
        view=VIEW_SAGITTAL,
        source_id=vol.id,
        thickness_mm=vol.sz,
    )


def resize_linear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable linear resampling to an explicit output size.

    Output sample i maps to source coordinate i * (in_size / out_size),
    clamped at the far edge; identity when sizes match.
    """
    out = _resample_axis(np.asarray(arr, dtype=np.float64), 0, out_h)
    out = _resample_axis(out, 1, out_w)
    return out


def _resample_axis(arr: np.ndarray, axis: int, out_n: int) -> np.ndarray:
    in_n = arr.shape[axis]
    if out_n == in_n:
        return arr
    coords = np.arange(out_n) * (in_n / out_n)
    coords = np.clip(coords, 0, in_n - 1)
    lo = np.floor(coords).astype(int)
    hi = np.minimum(lo + 1, in_n - 1)
    frac = coords - lo
    a = np.take(arr, lo, axis=axis)
    b = np.take(arr, hi, axis=axis)
    shape = [1, 1]
    shape[axis] = out_n
    frac = frac.reshape(shape)
    return a * (1 - frac) + b * frac


def resample_to_1mm(img: MipImage) -> MipImage:
    """Resample to 1x1 mm pixels with linear interpolation."""
    row_s, col_s = img.spacing
    if (row_s, col_s) == (1.0, 1.0):
        return img
    out_h = max(round_half_up(img.height * row_s), 1)
    out_w = max(round_half_up(img.width * col_s), 1)
    pixels = resize_linear(img.pixels, out_h, out_w)
    return replace(img, pixels=pixels, spacing=(1.0, 1.0))


def threshold_and_quantize(img: MipImage) -> MipImage:
    """Clamp to the [100, 1500] HU window, then map affinely to [-127, 127]."""
    if img.intensity_domain != "hu":
        raise ValueError(f"expected HU-domain image, got {img.intensity_domain!r}")
    lo, hi = HU_WINDOW
    qlo, qhi = INT8_RANGE
    clamped = np.clip(img.pixels, lo, hi)
    scaled = qlo + (clamped - lo) / (hi - lo) * (qhi - qlo)
    pixels = np.rint(scaled).astype(np.int16)
    return replace(img, pixels=pixels, intensity_domain="int8")


def preprocess_volume(
    vol: Volume3D, half_width_mm: float = DEFAULT_SAGITTAL_HALF_WIDTH_MM
) -> tuple[MipImage, MipImage]:
    """Full chain project -> resample to 1mm -> window/quantize for both views."""
    frontal = threshold_and_quantize(resample_to_1mm(project_frontal(vol)))
    sagittal = threshold_and_quantize(
        resample_to_1mm(project_sagittal_restricted(vol, half_width_mm))
    )
    return frontal, sagittal


def save_mip_png(img: MipImage, path) -> None:
    """Persist an int8-domain MIP as 8-bit PNG (+127 offset) with JSON sidecar."""
    if img.intensity_domain != "int8":
        raise ValueError("only int8-domain images are persisted as PNG")
    path = Path(path)
    stored = (img.pixels.astype(np.int16) + 127).astype(np.uint8)
    Image.fromarray(stored, mode="L").save(path)
    sidecar = {
        "source_id": img.source_id,
        "view": img.view,
        "height_mm": float(img.height * img.spacing[0]),
        "width_mm": float(img.width * img.spacing[1]),
        "original_slice_thickness_mm": float(img.thickness_mm),
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2), encoding="utf-8")


def load_mip_png(path) -> MipImage:
    """Load a MIP stored by :func:`save_mip_png`."""
    path = Path(path)
    stored = np.asarray(Image.open(path).convert("L"), dtype=np.int16)
    sidecar_path = path.with_suffix(".json")
    if not sidecar_path.exists():
        raise MetadataError(f"missing JSON sidecar for {path}")
    meta = json.loads(sidecar_path.read_text(encoding="utf-8"))
    return MipImage(
        pixels=stored - 127,
        spacing=(1.0, 1.0),
        intensity_domain="int8",
        view=meta["view"],
        source_id=meta["source_id"],
        thickness_mm=float(meta.get("original_slice_thickness_mm", 1.0)),
    )
