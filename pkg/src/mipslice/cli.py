"""Command-line entry point.

Subcommands cover the whole desk-scale pipeline: phantom generation,
volume preprocessing, training, prediction, evaluation, timing, and the
annotation backend. Precedence: defaults < command-line flags <
config-file values. Set MIPSLICE_CACHE to reuse preprocessed MIPs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import evaluation, inference, training
from .augment import AugmentConfig
from .errors import FormatError
from .mip import load_mip_png, preprocess_volume, save_mip_png
from .models import (
    VARIANT_1D,
    VARIANT_2D,
    VARIANT_BASELINE,
    VARIANT_BASELINE_DUAL,
    ModelConfig,
    build_model,
    count_parameters,
    load_checkpoint,
    save_checkpoint,
)
from .phantom import PhantomConfig, generate_dataset
from .targets import merge_annotations, read_annotations_csv
from .volume import load_volume

VARIANT_ALIASES = {
    "l3unet2d": VARIANT_2D,
    "l3unet1d": VARIANT_1D,
    "baseline": VARIANT_BASELINE,
    "baseline-dual": VARIANT_BASELINE_DUAL,
}


def _apply_section(cfg, section: dict, name: str):
    """Overlay config-file keys onto a dataclass, rejecting unknown keys."""
    known = {f.name for f in fields(cfg)}
    unknown = set(section) - known
    if unknown:
        raise ValueError(f"unknown {name} config keys: {sorted(unknown)}")
    coerced = {}
    for key, value in section.items():
        if isinstance(value, list):
            value = tuple(value)
        coerced[key] = value
    return replace(cfg, **coerced)


def _load_config_file(path) -> dict:
    with open(path, encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a mapping")
    unknown = set(data) - {"train", "augment", "model", "phantom"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    return data


def cmd_gen_phantoms(args) -> int:
    cfg = PhantomConfig()
    if args.config:
        sections = _load_config_file(args.config)
        cfg = _apply_section(cfg, sections.get("phantom", {}), "phantom")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    generate_dataset(
        args.count, cfg, seed=args.seed, out_dir=out, write_volumes=args.volumes
    )
    print(f"wrote {args.count} phantoms to {out}")
    return 0


def _cache_key(path: Path) -> str:
    stat = path.stat()
    return hashlib.sha256(
        f"{path.name}:{stat.st_size}:{stat.st_mtime_ns}".encode()
    ).hexdigest()[:24]


def cmd_preprocess(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cache_dir = os.environ.get("MIPSLICE_CACHE")
    for vol_path in map(Path, args.volumes):
        cached = None
        if cache_dir:
            cached = Path(cache_dir) / _cache_key(vol_path)
        vol = None
        names = None
        if cached is not None and cached.is_dir():
            names = sorted(p.name for p in cached.glob("*"))
            for name in names:
                shutil.copy2(cached / name, out / name)
        else:
            vol = load_volume(vol_path)
            frontal, sagittal = preprocess_volume(vol)
            save_mip_png(frontal, out / f"{vol.id}_frontal.png")
            save_mip_png(sagittal, out / f"{vol.id}_sagittal.png")
            if cached is not None:
                cached.mkdir(parents=True, exist_ok=True)
                for name in (
                    f"{vol.id}_frontal.png",
                    f"{vol.id}_frontal.json",
                    f"{vol.id}_sagittal.png",
                    f"{vol.id}_sagittal.json",
                ):
                    shutil.copy2(out / name, cached / name)
        print(f"preprocessed {vol_path.name}")
    return 0


def cmd_train(args) -> int:
    variant = VARIANT_ALIASES[args.variant]
    train_cfg = training.TrainConfig.for_variant(variant, seed=args.seed)
    model_cfg = ModelConfig(variant=variant)
    if args.epochs is not None:
        train_cfg = replace(train_cfg, epochs=args.epochs)
    if args.config:
        sections = _load_config_file(args.config)
        train_cfg = _apply_section(train_cfg, sections.get("train", {}), "train")
        aug = _apply_section(train_cfg.augment, sections.get("augment", {}), "augment")
        train_cfg = replace(train_cfg, augment=aug)
        model_section = dict(sections.get("model", {}))
        model_section.setdefault("variant", variant)
        model_cfg = _apply_section(model_cfg, model_section, "model")

    dataset = training.load_dataset(args.data, view=args.view)
    if not dataset:
        print(f"no training samples found under {args.data}", file=sys.stderr)
        return 1
    model = build_model(model_cfg)
    print(
        f"training {model_cfg.variant} ({count_parameters(model):,} parameters)"
        f" on {len(dataset)} images for {train_cfg.epochs} epochs"
    )
    model, history = training.train(model, dataset, train_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "model.pt", epoch=train_cfg.epochs, training_config=train_cfg)
    history.to_csv(out / "history.csv")
    resolved = {
        "train": {f.name: getattr(train_cfg, f.name) for f in fields(train_cfg) if f.name != "augment"},
        "augment": {f.name: getattr(train_cfg.augment, f.name) for f in fields(train_cfg.augment)},
        "model": {f.name: getattr(model_cfg, f.name) for f in fields(model_cfg)},
    }
    with open(out / "experiment.yaml", "w", encoding="utf-8") as f:
        yaml.safe_dump(json.loads(json.dumps(resolved)), f, sort_keys=True)
    print(f"checkpoint and history written to {out}")
    return 0


def cmd_predict(args) -> int:
    model = load_checkpoint(args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for input_path in map(Path, args.inputs):
        name = input_path.name.lower()
        if name.endswith((".nii", ".nii.gz", ".raw")):
            vol = load_volume(input_path)
            result = inference.predict_volume(model, vol, view=args.view)
            frontal, sagittal = preprocess_volume(vol)
            img = frontal if args.view == "frontal" else sagittal
        elif name.endswith(".png"):
            img = load_mip_png(input_path)
            result = inference.predict(model, img)
        else:
            raise FormatError(f"unsupported input {input_path}")
        stem = f"{result.image_id}_{result.view.split('_')[0]}"
        inference.write_prediction_json(result, out / f"{stem}.json")
        if not args.no_overlay:
            inference.save_overlay_png(img, result, out / f"{stem}_overlay.png")
        flag = " (low confidence)" if result.low_confidence else ""
        print(
            f"{result.image_id}: y = {result.y_mm:.1f} mm, slice = {result.slice_index},"
            f" confidence = {result.confidence:.3f}{flag}"
        )
    return 0


def cmd_evaluate(args) -> int:
    preds = {}
    pred_dir = Path(args.pred)
    for path in sorted(pred_dir.glob("*.json")):
        if path.name.endswith("_overlay.json"):
            continue
        record = inference.read_prediction_json(path)
        if "y_mm" in record and "image_id" in record:
            preds[record["image_id"]] = record
    merged = merge_annotations(read_annotations_csv(args.ann))

    mips_dir = Path(args.mips) if args.mips else None
    rows = []
    for image_id, record in sorted(preds.items()):
        ann = merged.get(image_id)
        if ann is None or ann.ambiguous:
            continue
        thickness = 1.0
        if mips_dir is not None:
            sidecar = mips_dir / f"{image_id}_frontal.json"
            if sidecar.exists():
                meta = json.loads(sidecar.read_text(encoding="utf-8"))
                thickness = float(meta.get("original_slice_thickness_mm", 1.0))
        rows.append((record["y_mm"], ann.y_mm, thickness))
    if not rows:
        print("no (prediction, annotation) pairs to evaluate", file=sys.stderr)
        return 1
    p, g, t = zip(*rows)
    stats = evaluation.localization_errors(p, g, t)
    table = evaluation.format_stats_table({f"{len(rows)} images": stats})
    print(table)
    if args.out:
        evaluation.write_stats_csv({"evaluation": stats}, args.out)
    return 0


def cmd_benchmark(args) -> int:
    image = load_mip_png(args.image) if args.image else _synthetic_image(args.height)
    predictors = {}
    for ckpt in args.models:
        model = load_checkpoint(ckpt)
        name = f"{model.variant}:{Path(ckpt).stem}"
        if model.variant in (VARIANT_BASELINE, VARIANT_BASELINE_DUAL):
            predictors[name] = lambda img, m=model: inference.sliding_window_predict(
                m, img, stride=args.stride
            )
        else:
            predictors[name] = lambda img, m=model: inference.predict(m, img)
    report = evaluation.benchmark(predictors, [image], runs=args.runs)
    print(report.format_table())
    return 0


def _synthetic_image(height: int):
    from .mip import MipImage

    rng = np.random.default_rng(0)
    pixels = rng.integers(-127, 128, size=(height, 512), dtype=np.int16)
    return MipImage(
        pixels=pixels,
        spacing=(1.0, 1.0),
        intensity_domain="int8",
        view="frontal",
        source_id=f"synthetic_{height}",
    )


def cmd_serve(args) -> int:
    from .service import serve

    serve(args.data, port=args.port, host=args.host)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mipslice",
        description="Detect the L3 slice in CT volumes via MIP confidence-map regression.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-phantoms", help="generate a synthetic phantom dataset")
    p.add_argument("-n", "--count", type=int, required=True)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--volumes", action="store_true", help="also write NIfTI volumes")
    p.add_argument("--config", help="YAML config with a phantom: section")
    p.set_defaults(fn=cmd_gen_phantoms)

    p = sub.add_parser("preprocess", help="volumes -> preprocessed MIP PNG pairs")
    p.add_argument("volumes", nargs="+")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("train", help="train a detector on a dataset directory")
    p.add_argument("--variant", choices=sorted(VARIANT_ALIASES), default="l3unet1d")
    p.add_argument("--data", required=True, help="directory with mips/ and annotations.csv")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="YAML config (overrides flags)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--view", choices=["frontal", "sagittal"], default="frontal")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict", help="predict on volumes or MIP PNGs")
    p.add_argument("--model", required=True, help="checkpoint .pt path")
    p.add_argument("--input", dest="inputs", nargs="+", required=True)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--view", choices=["frontal", "sagittal"], default="frontal")
    p.add_argument("--no-overlay", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("evaluate", help="error statistics from predictions + annotations")
    p.add_argument("--pred", required=True, help="directory of prediction JSONs")
    p.add_argument("--ann", required=True, help="annotation CSV")
    p.add_argument("--mips", help="MIP directory for slice-thickness sidecars")
    p.add_argument("-o", "--out", help="write stats CSV here")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("benchmark", help="timing comparison across checkpoints")
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--image", help="MIP PNG to time on (default: synthetic)")
    p.add_argument("--height", type=int, default=440)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--runs", type=int, default=10)
    p.set_defaults(fn=cmd_benchmark)

    p = sub.add_parser("serve", help="run the annotation backend")
    p.add_argument("--data", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # surface a diagnostic, not a traceback
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
