"""Calibration run for the phantom end-to-end experiment."""

import sys
import time

import numpy as np

from mipslice.augment import AugmentConfig
from mipslice.inference import predict
from mipslice.models import ModelConfig, build_l3unet_1d
from mipslice.phantom import PhantomConfig, generate_dataset
from mipslice.training import TrainConfig, train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 12
crop_w = int(sys.argv[2]) if len(sys.argv) > 2 else 256
base_channels = int(sys.argv[3]) if len(sys.argv) > 3 else 32

t0 = time.perf_counter()
train_samples = generate_dataset(200, PhantomConfig(), seed=100)
test_samples = generate_dataset(50, PhantomConfig(), seed=200)
print(f"gen: {time.perf_counter()-t0:.1f}s", flush=True)

dataset = [(s["frontal"], s["y_mm"]) for s in train_samples]
aug = AugmentConfig(dropout_prob=0.0, overexposure_prob=0.0, piecewise_affine_prob=0.0)
cfg = TrainConfig(epochs=epochs, crop_w=crop_w, batch_size=8, seed=0, augment=aug)
model = build_l3unet_1d(ModelConfig(variant="l3unet1d", base_channels=base_channels))

t0 = time.perf_counter()
model, hist = train(model, dataset, cfg)
train_time = time.perf_counter() - t0
print(f"train {epochs} epochs: {train_time/60:.1f} min", flush=True)
print("loss:", [f"{x:.1f}" for x in hist.losses], flush=True)
print("val:", [f"{x:.1f}" for x in hist.val_errors_mm], flush=True)

errs = []
for s in test_samples:
    r = predict(model, s["frontal"])
    errs.append(abs(r.y_mm - s["y_mm"]))
errs = np.array(errs)
print(f"median {np.median(errs):.2f} mm, outliers>10mm {(errs>10).sum()}/50, max {errs.max():.1f}")
