"""Input validation helpers shared by the estimator layer."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .mip import MipImage
from .volume import Volume3D


def check_volume(obj) -> Volume3D:
    if not isinstance(obj, Volume3D):
        raise TypeError(f"expected Volume3D, got {type(obj).__name__}")
    return obj


def check_mip_image(obj, domain: str | None = None) -> MipImage:
    if not isinstance(obj, MipImage):
        raise TypeError(f"expected MipImage, got {type(obj).__name__}")
    if domain is not None and obj.intensity_domain != domain:
        raise ValueError(
            f"expected {domain!r}-domain image, got {obj.intensity_domain!r}"
        )
    return obj


def check_paired_lengths(X, y):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or len(X) != len(y):
        raise ShapeError(
            f"X and y must be 1:1, got {len(X)} images and y of shape {y.shape}"
        )
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")
    return y


def check_fitted(estimator, attribute: str):
    if not hasattr(estimator, attribute):
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )
