"""3D CT volumes: loading, saving, and world/index coordinate conversion.

Axis convention (fixed for the whole package):

* axis 0 — slice axis, inferior to superior, spacing ``sz``
* axis 1 — anterior to posterior, spacing ``sy``
* axis 2 — left to right, spacing ``sx``

``spacing`` is stored world-ordered as ``(sx, sy, sz)``, i.e. reversed
relative to the data axes. The mm origin sits at the inferior-most slice.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nifti
from .errors import FormatError, MetadataError

RAW_SUFFIX = ".raw"


def round_half_up(x: float) -> int:
    """Round to nearest integer, ties going up (0.5 -> 1)."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class Volume3D:
    """3D HU grid with per-axis voxel spacing in mm."""

    data: np.ndarray
    spacing: tuple[float, float, float]  # (sx, sy, sz)
    id: str = "volume"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        object.__setattr__(self, "data", data)
        spacing = tuple(float(s) for s in self.spacing)
        object.__setattr__(self, "spacing", spacing)
        if data.ndim != 3:
            raise FormatError(f"volume must be rank 3, got rank {data.ndim}")
        if min(data.shape) < 1:
            raise FormatError(f"every extent must be >= 1, got shape {data.shape}")
        if len(spacing) != 3 or not all(math.isfinite(s) and s > 0 for s in spacing):
            raise MetadataError(f"spacing must be three positive finite values, got {spacing}")
        if not np.all(np.isfinite(data)):
            raise MetadataError("volume contains NaN or Inf values")

    @property
    def sx(self) -> float:
        return self.spacing[0]

    @property
    def sy(self) -> float:
        return self.spacing[1]

    @property
    def sz(self) -> float:
        return self.spacing[2]

    @property
    def height_mm(self) -> float:
        """Extent of the slice axis in mm."""
        return self.data.shape[0] * self.sz


def slice_index_for_y(vol: Volume3D, y_mm: float) -> int:
    """Nearest slice index for a position along the inferior-superior axis.

    Rounds half-up and clamps to the valid index range.
    """
    if y_mm < 0:
        raise ValueError(f"y_mm must be non-negative, got {y_mm}")
    idx = round_half_up(y_mm / vol.sz)
    return min(max(idx, 0), vol.data.shape[0] - 1)


def load_volume(path) -> Volume3D:
    """Load a volume from NIfTI (.nii/.nii.gz) or the raw+JSON fallback."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    name = path.name.lower()
    if name.endswith(".nii") or name.endswith(".nii.gz"):
        data, spacing = nifti.read_nifti(path)
        vol_id = path.name[: -len(".nii.gz")] if name.endswith(".nii.gz") else path.stem
        return Volume3D(data=data, spacing=spacing, id=vol_id)
    if name.endswith(RAW_SUFFIX):
        return _load_raw(path)
    raise FormatError(f"unrecognized volume format: {path}")


def save_volume(vol: Volume3D, path) -> None:
    """Save to NIfTI or the raw fallback depending on the suffix."""
    path = Path(path)
    name = path.name.lower()
    if name.endswith(".nii") or name.endswith(".nii.gz"):
        nifti.write_nifti(path, vol.data, vol.spacing)
    elif name.endswith(RAW_SUFFIX):
        _save_raw(vol, path)
    else:
        raise FormatError(f"unrecognized volume format: {path}")


def _sidecar_path(raw_path: Path) -> Path:
    return raw_path.with_suffix(".json")


def _load_raw(path: Path) -> Volume3D:
    sidecar = _sidecar_path(path)
    if not sidecar.exists():
        raise MetadataError(f"missing JSON sidecar for {path}")
    meta = json.loads(sidecar.read_text(encoding="utf-8"))
    for key in ("shape", "spacing", "dtype"):
        if key not in meta:
            raise MetadataError(f"{sidecar}: missing key {key!r}")
    shape = tuple(int(n) for n in meta["shape"])
    data = np.fromfile(path, dtype=np.dtype(meta["dtype"]))
    if data.size != int(np.prod(shape)):
        raise FormatError(f"{path}: expected {np.prod(shape)} scalars, found {data.size}")
    data = data.reshape(shape)
    axis_order = meta.get("axis_order", "zyx")
    if axis_order != "zyx":
        perm = ["zyx".index(a) for a in axis_order]
        data = np.transpose(data, np.argsort(perm))
    spacing = tuple(float(s) for s in meta["spacing"])
    return Volume3D(data=data, spacing=spacing, id=meta.get("id", path.stem))


def _save_raw(vol: Volume3D, path: Path) -> None:
    vol.data.astype(np.float32).tofile(path)
    meta = {
        "shape": list(vol.data.shape),
        "spacing": list(vol.spacing),
        "dtype": "float32",
        "axis_order": "zyx",
        "id": vol.id,
    }
    _sidecar_path(path).write_text(json.dumps(meta, indent=2), encoding="utf-8")
