"""Whole-image prediction and the sliding-window baseline path.

Whole images are padded bottom/right with the intensity floor so both
dims divide the network's downsample factor, the confidence map is
cropped back, and the peak row becomes the predicted position (ties go
to the smallest row). Predictions below 0.5 peak confidence are flagged.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .errors import ShapeError
from .mip import INT8_RANGE, MipImage, preprocess_volume
from .models import VARIANT_1D, VARIANT_2D
from .volume import Volume3D, slice_index_for_y

LOW_CONFIDENCE_THRESHOLD = 0.5
PAD_VALUE = INT8_RANGE[0]


@dataclass(frozen=True)
class PadRecord:
    orig_h: int
    orig_w: int


@dataclass
class PredictionResult:
    y_mm: float
    confidence: float
    low_confidence: bool
    map: np.ndarray
    elapsed_s: float
    slice_index: int | None = None
    image_id: str = ""
    view: str = ""
    variant: str = ""

    def to_json_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "view": self.view,
            "variant": self.variant,
            "y_mm": float(self.y_mm),
            "slice_index": self.slice_index,
            "confidence": float(self.confidence),
            "low_confidence": bool(self.low_confidence),
            "elapsed_s": float(self.elapsed_s),
        }


def pad_to_divisible(img: MipImage, factor: int) -> tuple[MipImage, PadRecord]:
    """Pad bottom/right with the intensity floor to the next multiples of factor."""
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    h, w = img.pixels.shape
    new_h = -(-h // factor) * factor
    new_w = -(-w // factor) * factor
    record = PadRecord(orig_h=h, orig_w=w)
    if (new_h, new_w) == (h, w):
        return img, record
    pixels = np.pad(
        img.pixels, ((0, new_h - h), (0, new_w - w)), constant_values=PAD_VALUE
    )
    return replace(img, pixels=pixels), record


def unpad_map(values: np.ndarray, record: PadRecord) -> np.ndarray:
    """Crop a prediction map back to the pre-padding dims."""
    if values.ndim == 1:
        return values[: record.orig_h]
    return values[: record.orig_h, : record.orig_w]


def _peak(values: np.ndarray) -> tuple[int, float]:
    """(row of the maximum, its value); ties resolved to the smallest row."""
    flat_idx = int(np.argmax(values))  # first occurrence = smallest row (C order)
    if values.ndim == 1:
        return flat_idx, float(values[flat_idx])
    row, col = np.unravel_index(flat_idx, values.shape)
    return int(row), float(values[row, col])


def forward_map(model, img: MipImage) -> np.ndarray:
    """Pad, run the FCN, and crop the confidence map to the image dims."""
    padded, record = pad_to_divisible(img, model.total_downsample)
    x = torch.from_numpy(padded.pixels.astype(np.float32) / 127.0)[None, None]
    model.eval()
    with torch.no_grad():
        out = model(x)
    values = out.squeeze(0).squeeze(0).numpy() if model.variant == VARIANT_2D else out.squeeze(0).numpy()
    return unpad_map(values, record)


def predict(model, img: MipImage) -> PredictionResult:
    """Whole-image prediction for the fully-convolutional variants."""
    if model.variant not in (VARIANT_1D, VARIANT_2D):
        raise ValueError(f"predict expects an FCN variant, got {model.variant}")
    start = time.perf_counter()
    values = forward_map(model, img)
    row, peak = _peak(values)
    elapsed = time.perf_counter() - start
    return PredictionResult(
        y_mm=float(row),
        confidence=peak,
        low_confidence=peak < LOW_CONFIDENCE_THRESHOLD,
        map=values,
        elapsed_s=elapsed,
        image_id=img.source_id,
        view=img.view,
        variant=model.variant,
    )


def sliding_window_predict(model, img: MipImage, stride: int = 1, batch_size: int = 32):
    """Scan fixed-size crops down the image with the baseline regressor.

    Dual output: the window with the highest presence probability wins and
    its regressed local row (plus the window offset) is the prediction.
    Single output: the median of all per-window predictions.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    crop_h, crop_w = model.crop
    start = time.perf_counter()
    pixels = img.pixels
    h, w = pixels.shape
    if w < crop_w:
        pad = crop_w - w
        left = pad // 2
        pixels = np.pad(pixels, ((0, 0), (left, pad - left)), constant_values=PAD_VALUE)
        w = crop_w
    if h < crop_h:
        pixels = np.pad(pixels, ((0, crop_h - h), (0, 0)), constant_values=PAD_VALUE)
        h = crop_h
    left = w // 2 - crop_w // 2
    offsets = list(range(0, h - crop_h + 1, stride))

    model.eval()
    outputs = []
    with torch.no_grad():
        for i in range(0, len(offsets), batch_size):
            chunk = offsets[i : i + batch_size]
            windows = np.stack(
                [pixels[o : o + crop_h, left : left + crop_w] for o in chunk]
            )
            x = torch.from_numpy(windows.astype(np.float32) / 127.0).unsqueeze(1)
            outputs.append(model(x))
    out = torch.cat(outputs, dim=0)

    orig_h = img.pixels.shape[0]
    values = np.zeros(orig_h)
    if model.dual:
        pred_y = out[:, 0].numpy()
        presence = out[:, 1].numpy()
        best = int(np.argmax(presence))
        y = offsets[best] + float(np.clip(pred_y[best], 0, crop_h - 1))
        confidence = float(presence[best])
        for o, py, p in zip(offsets, pred_y, presence):
            r = int(np.clip(round(o + py), 0, orig_h - 1))
            values[r] = max(values[r], p)
    else:
        ys = [o + float(np.clip(v, 0, crop_h - 1)) for o, v in zip(offsets, out.numpy())]
        y = float(np.median(ys))
        confidence = 1.0  # plain regression offers no probabilistic output
        values[int(np.clip(round(y), 0, orig_h - 1))] = 1.0
    y = float(np.clip(y, 0, orig_h - 1))
    elapsed = time.perf_counter() - start
    return PredictionResult(
        y_mm=y,
        confidence=confidence,
        low_confidence=confidence < LOW_CONFIDENCE_THRESHOLD,
        map=values,
        elapsed_s=elapsed,
        image_id=img.source_id,
        view=img.view,
        variant=model.variant,
    )


def predict_volume(model, vol: Volume3D, view: str = "frontal") -> PredictionResult:
    """Preprocess a volume, predict on the requested view, map back to a slice."""
    frontal, sagittal = preprocess_volume(vol)
    img = frontal if view == "frontal" else sagittal
    result = predict(model, img)
    result.slice_index = slice_index_for_y(vol, result.y_mm)
    result.image_id = vol.id
    return result


def write_prediction_json(result: PredictionResult, path) -> None:
    Path(path).write_text(
        json.dumps(result.to_json_dict(), indent=2), encoding="utf-8"
    )


def read_prediction_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def save_overlay_png(img: MipImage, result: PredictionResult, path, gt_y_mm=None) -> None:
    """Confidence map alpha-blended over the MIP; prediction row red, truth green."""
    gray = (img.pixels.astype(np.int16) + 127).astype(np.uint8)
    rgb = np.stack([gray, gray, gray], axis=-1).astype(np.float64)
    conf = result.map
    if conf is not None:
        if conf.ndim == 1:  # stretch the 1D map across the width for display
            conf = np.repeat(conf[:, None], gray.shape[1], axis=1)
        conf = np.clip(conf[: gray.shape[0], : gray.shape[1]], 0.0, 1.0)
        alpha = 0.5 * conf
        rgb[..., 0] = rgb[..., 0] * (1 - alpha) + 255 * alpha  # heat in red
        rgb[..., 2] = rgb[..., 2] * (1 - alpha)
    pred_row = int(np.clip(round(result.y_mm), 0, gray.shape[0] - 1))
    rgb[pred_row, :, :] = (255, 0, 0)
    if gt_y_mm is not None:
        gt_row = int(np.clip(round(gt_y_mm), 0, gray.shape[0] - 1))
        rgb[gt_row, :, :] = (0, 255, 0)
    Image.fromarray(rgb.astype(np.uint8), mode="RGB").save(path)
