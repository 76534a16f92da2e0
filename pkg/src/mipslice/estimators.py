"""scikit-learn style front door: a preprocessing transformer and a detector.

`MipPreprocessor` turns volumes into preprocessed MIP image pairs;
`L3SliceDetector` wraps model construction, the training protocol, and
whole-image prediction behind fit/predict so the pipeline composes with
the usual sklearn tooling (get_params, set_params, clone).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import inference, training
from .augment import AugmentConfig
from .mip import preprocess_volume
from .models import ModelConfig, VARIANT_1D, build_model, count_parameters
from .validation import check_fitted, check_mip_image, check_paired_lengths, check_volume


class MipPreprocessor(TransformerMixin, BaseEstimator):
    """Stateless volume -> (frontal, sagittal) MIP preprocessing."""

    def __init__(self, half_width_mm: float = 20.0):
        self.half_width_mm = half_width_mm

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return [preprocess_volume(check_volume(v), self.half_width_mm) for v in X]


class L3SliceDetector(BaseEstimator):
    """Confidence-map slice detector with the published training protocol.

    Parameters mirror the training and model configuration; `fit` expects
    preprocessed int8 MIP images and per-image row annotations in mm.
    """

    def __init__(
        self,
        variant: str = VARIANT_1D,
        epochs: int = 50,
        batch_size: int | None = None,
        lr: float | None = None,
        crop_h: int = 256,
        crop_w: int = 384,
        sigma_start: float = 10.0,
        sigma_end: float = 1.5,
        depth: int = 5,
        base_channels: int = 32,
        augment: AugmentConfig | None = None,
        val_fraction: float = 0.1,
        seed: int = 0,
    ):
        self.variant = variant
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.crop_h = crop_h
        self.crop_w = crop_w
        self.sigma_start = sigma_start
        self.sigma_end = sigma_end
        self.depth = depth
        self.base_channels = base_channels
        self.augment = augment
        self.val_fraction = val_fraction
        self.seed = seed

    def _configs(self):
        overrides = {
            "epochs": self.epochs,
            "crop_h": self.crop_h,
            "crop_w": self.crop_w,
            "sigma_start": self.sigma_start,
            "sigma_end": self.sigma_end,
            "val_fraction": self.val_fraction,
            "seed": self.seed,
        }
        if self.batch_size is not None:
            overrides["batch_size"] = self.batch_size
        if self.lr is not None:
            overrides["lr"] = self.lr
        if self.augment is not None:
            overrides["augment"] = self.augment
        train_cfg = training.TrainConfig.for_variant(self.variant, **overrides)
        model_cfg = ModelConfig(
            variant=self.variant, depth=self.depth, base_channels=self.base_channels
        )
        return model_cfg, train_cfg

    def fit(self, X, y):
        y = check_paired_lengths(X, y)
        dataset = [(check_mip_image(img, "int8"), float(t)) for img, t in zip(X, y)]
        model_cfg, train_cfg = self._configs()
        model = build_model(model_cfg)
        self.model_, self.history_ = training.train(model, dataset, train_cfg)
        self.parameter_count_ = count_parameters(self.model_)
        self.train_config_ = train_cfg
        return self

    def predict(self, X) -> np.ndarray:
        check_fitted(self, "model_")
        return np.array([r.y_mm for r in self.predict_result(X)])

    def predict_result(self, X) -> list:
        check_fitted(self, "model_")
        return [
            inference.predict(self.model_, check_mip_image(img, "int8")) for img in X
        ]

    def score(self, X, y) -> float:
        """Negative median absolute error in mm (higher is better)."""
        y = check_paired_lengths(X, y)
        preds = self.predict(X)
        return -float(np.median(np.abs(preds - y)))
