"""Synthetic spine phantoms with a known target-slice position.

A phantom is a stack of bright vertebra boxes (with transverse and
spinous processes) over a sacrum wedge, rendered as frontal and sagittal
projection images in HU, then windowed and thickness-degraded like real
MIPs. The annotated row is the center of the third vertebra above the
sacrum. Geometry keeps gaps wide enough that vertebra bands survive the
worst simulated slice thickness, so a rule-based band counter can always
recover the annotation.

Deliberately simplistic: the job is pipeline verification, not anatomy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import simulate_thickness
from .mip import VIEW_FRONTAL, VIEW_SAGITTAL, MipImage, threshold_and_quantize
from .targets import Annotation, write_annotations_csv
from .volume import Volume3D, save_volume


@dataclass(frozen=True)
class PhantomConfig:
    n_vertebrae: tuple[int, int] = (12, 20)
    vert_height_mm: tuple[float, float] = (15, 21)
    gap_mm: tuple[float, float] = (8, 12)
    body_half_width_mm: tuple[float, float] = (15, 19)
    # lumbar vertebrae are larger: per-level shrink going up the spine
    size_taper: float = 0.95
    process_half_width_mm: tuple[float, float] = (26, 34)
    process_height_frac: float = 0.4
    spinous_depth_mm: tuple[float, float] = (14, 20)
    # vertebrae this far above the sacrum (and higher) carry rib-like arcs
    first_ribbed_level: int = 5
    rib_half_width_mm: tuple[float, float] = (40, 55)
    sacrum_height_mm: tuple[float, float] = (45, 60)
    sacrum_top_width_mm: tuple[float, float] = (56, 70)
    sacrum_bottom_width_mm: tuple[float, float] = (16, 24)
    torso_width_mm: tuple[float, float] = (140, 200)
    torso_depth_mm: tuple[float, float] = (140, 200)
    spine_jitter_mm: float = 8.0
    max_height_mm: float = 330.0
    tight_fov_prob: float = 0.5
    tight_fov_margin_mm: tuple[float, float] = (30, 60)
    thickness_range_mm: tuple[float, float] = (1, 5)
    inplane_spacing_mm: tuple[float, float] = (0.8, 1.2)
    bone_hu: tuple[float, float] = (350, 900)
    soft_hu: float = 40.0
    noise_hu: float = 12.0
    max_retries: int = 20

    def __post_init__(self):
        if self.thickness_range_mm[0] < 1:
            raise ValueError("slice thickness must be >= 1 mm")
        if self.gap_mm[0] < self.thickness_range_mm[1] + 2:
            raise ValueError(
                "vertebra gaps must exceed the worst slice thickness by 2 mm,"
                " otherwise bands merge and the target is ill-defined"
            )


@dataclass
class _Box:
    """Axis-aligned structure in mm: z (height), x (width), y (depth), intensity."""

    z0: float
    z1: float
    x0: float
    x1: float
    y0: float
    y1: float
    hu: float


@dataclass
class _Geometry:
    boxes: list
    width_mm: float
    depth_mm: float
    height_mm: float
    y_true_mm: float
    thickness_mm: float
    inplane_mm: float
    soft_hu: float
    noise_hu: float


def _sample_geometry(cfg: PhantomConfig, rng) -> _Geometry | None:
    u = rng.uniform
    width = float(u(*cfg.torso_width_mm))
    depth = float(u(*cfg.torso_depth_mm))
    cx = width / 2 + float(u(-cfg.spine_jitter_mm, cfg.spine_jitter_mm))
    cy = depth / 2 + float(u(-cfg.spine_jitter_mm, cfg.spine_jitter_mm))

    boxes: list[_Box] = []
    z = float(u(5, 15))  # margin below the sacrum

    # sacrum: stack of thin layers tapering from wide (top) to narrow (bottom)
    sac_h = float(u(*cfg.sacrum_height_mm))
    top_w = float(u(*cfg.sacrum_top_width_mm))
    bot_w = float(u(*cfg.sacrum_bottom_width_mm))
    body_depth = float(u(22, 30))
    n_layers = 8
    for i in range(n_layers):
        frac = i / (n_layers - 1)  # 0 = bottom, 1 = top
        half_w = (bot_w + (top_w - bot_w) * frac) / 2
        lz0 = z + sac_h * i / n_layers
        lz1 = z + sac_h * (i + 1) / n_layers
        boxes.append(
            _Box(lz0, lz1, cx - half_w, cx + half_w, cy - body_depth / 2, cy + body_depth / 2, float(u(*cfg.bone_hu)))
        )
    z += sac_h

    n_vert = int(rng.integers(cfg.n_vertebrae[0], cfg.n_vertebrae[1] + 1))
    y_true = None
    placed = 0
    for k in range(n_vert):
        gap = float(u(*cfg.gap_mm))
        vh = float(u(*cfg.vert_height_mm)) * cfg.size_taper**k
        if z + gap + vh > cfg.max_height_mm - 5:
            break
        z0 = z + gap
        z1 = z0 + vh
        taper = cfg.size_taper**k
        bhw = float(u(*cfg.body_half_width_mm)) * taper
        hu = float(u(*cfg.bone_hu))
        boxes.append(_Box(z0, z1, cx - bhw, cx + bhw, cy - body_depth / 2, cy + body_depth / 2, hu))
        # transverse processes: thin wings over the top part of the body
        phw = float(u(*cfg.process_half_width_mm)) * taper
        pz0 = z1 - vh * cfg.process_height_frac
        boxes.append(_Box(pz0, z1, cx - phw, cx - bhw, cy - 4, cy + 4, hu * 0.9))
        boxes.append(_Box(pz0, z1, cx + bhw, cx + phw, cy - 4, cy + 4, hu * 0.9))
        # spinous process: posterior spur, visible in the sagittal view
        sp = float(u(*cfg.spinous_depth_mm))
        boxes.append(_Box(z0 + vh * 0.2, z1 - vh * 0.2, cx - 4, cx + 4, cy + body_depth / 2, cy + body_depth / 2 + sp, hu * 0.85))
        # rib arcs on upper (thoracic-like) vertebrae give crops local context
        if placed >= cfg.first_ribbed_level:
            rhw = float(u(*cfg.rib_half_width_mm))
            rib_z0 = z0 + vh * 0.3
            rib_z1 = z0 + vh * 0.7
            boxes.append(_Box(rib_z0, rib_z1, cx - rhw, cx - phw, cy - 6, cy + 2, hu * 0.8))
            boxes.append(_Box(rib_z0, rib_z1, cx + phw, cx + rhw, cy - 6, cy + 2, hu * 0.8))
        placed += 1
        if placed == 3:
            y_true = (z0 + z1) / 2
        z = z1

    if placed < 5 or y_true is None:
        return None  # not enough vertebrae above the sacrum for a stable target

    top_margin = float(u(5, 30))
    height = min(z + top_margin, cfg.max_height_mm)
    if rng.random() < cfg.tight_fov_prob:
        margin = float(u(*cfg.tight_fov_margin_mm))
        height = min(height, y_true + margin)
        boxes = [b for b in boxes if b.z0 < height]
        for b in boxes:
            b.z1 = min(b.z1, height)

    thickness = float(u(*cfg.thickness_range_mm))
    inplane = float(u(*cfg.inplane_spacing_mm))
    return _Geometry(
        boxes=boxes,
        width_mm=width,
        depth_mm=depth,
        height_mm=height,
        y_true_mm=y_true,
        thickness_mm=thickness,
        inplane_mm=inplane,
        soft_hu=cfg.soft_hu,
        noise_hu=cfg.noise_hu,
    )


def _paint(canvas: np.ndarray, r0, r1, c0, c1, value) -> None:
    h, w = canvas.shape
    r0, r1 = max(int(round(r0)), 0), min(int(round(r1)), h)
    c0, c1 = max(int(round(c0)), 0), min(int(round(c1)), w)
    if r1 > r0 and c1 > c0:
        region = canvas[r0:r1, c0:c1]
        np.maximum(region, value, out=region)


def _render_view(geom: _Geometry, view: str, rng) -> np.ndarray:
    """HU projection image at 1x1 mm; rows = height (bottom row = inferior)."""
    h = int(round(geom.height_mm))
    if view == VIEW_FRONTAL:
        w = int(round(geom.width_mm))
    else:
        w = int(round(geom.depth_mm))
    img = np.full((h, w), geom.soft_hu)
    band = None
    if view == VIEW_SAGITTAL:
        center = geom.width_mm / 2
        band = (center - 20.0, center + 20.0)
    for b in geom.boxes:
        if view == VIEW_FRONTAL:
            _paint(img, b.z0, b.z1, b.x0, b.x1, b.hu)
        else:
            if b.x1 < band[0] or b.x0 > band[1]:
                continue  # outside the restricted sagittal window
            _paint(img, b.z0, b.z1, b.y0, b.y1, b.hu)
    img += rng.normal(0.0, geom.noise_hu, size=img.shape)
    return img


def _sample_geometry_retry(cfg: PhantomConfig, rng) -> _Geometry:
    for _ in range(cfg.max_retries):
        geom = _sample_geometry(cfg, rng)
        if geom is not None:
            return geom
    raise RuntimeError(
        "could not place the target vertebra inside the field of view;"
        " loosen the phantom config"
    )


def _render_images(geom: _Geometry, rng, source_id: str):
    images = []
    for view in (VIEW_FRONTAL, VIEW_SAGITTAL):
        hu = _render_view(geom, view, rng)
        img = MipImage(
            pixels=hu,
            spacing=(1.0, 1.0),
            intensity_domain="hu",
            view=view,
            source_id=source_id,
            thickness_mm=geom.thickness_mm,
        )
        img = threshold_and_quantize(img)
        img = simulate_thickness(img, geom.thickness_mm)
        images.append(img)
    return images[0], images[1]


def generate_phantom(cfg: PhantomConfig, rng, source_id: str = "phantom"):
    """One phantom sample: (frontal, sagittal, y_true_mm, thickness_mm)."""
    geom = _sample_geometry_retry(cfg, rng)
    frontal, sagittal = _render_images(geom, rng, source_id)
    return frontal, sagittal, geom.y_true_mm, geom.thickness_mm


def render_phantom_volume(cfg: PhantomConfig, rng, source_id: str = "phantom") -> tuple[Volume3D, float]:
    """3D rendering of a phantom at native spacing; returns (volume, y_true_mm)."""
    geom = _sample_geometry_retry(cfg, rng)
    return _render_volume(geom, rng, source_id), geom.y_true_mm


def _render_volume(geom: _Geometry, rng, source_id: str) -> Volume3D:
    sz, sp = geom.thickness_mm, geom.inplane_mm
    nz = max(int(round(geom.height_mm / sz)), 1)
    ny = max(int(round(geom.depth_mm / sp)), 1)
    nx = max(int(round(geom.width_mm / sp)), 1)
    vol = np.full((nz, ny, nx), geom.soft_hu, dtype=np.float64)
    zc = np.arange(nz) * sz
    yc = np.arange(ny) * sp
    xc = np.arange(nx) * sp
    for b in geom.boxes:
        iz = np.nonzero((zc >= b.z0) & (zc < b.z1))[0]
        iy = np.nonzero((yc >= b.y0) & (yc < b.y1))[0]
        ix = np.nonzero((xc >= b.x0) & (xc < b.x1))[0]
        if len(iz) and len(iy) and len(ix):
            region = vol[np.ix_(iz, iy, ix)]
            vol[np.ix_(iz, iy, ix)] = np.maximum(region, b.hu)
    vol += rng.normal(0.0, geom.noise_hu, size=vol.shape)
    return Volume3D(data=vol, spacing=(sp, sp, sz), id=source_id)


def generate_dataset(
    n: int,
    cfg: PhantomConfig,
    seed: int,
    out_dir=None,
    write_volumes: bool = False,
    annotator: str = "synthetic",
):
    """Generate n phantoms; optionally persist MIP PNGs, sidecars, and CSV.

    Per-sample RNG streams are derived from (seed, index), so any prefix of
    the dataset is reproducible independently of n.
    """
    from .mip import save_mip_png

    samples = []
    records = []
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        (out_dir / "mips").mkdir(parents=True, exist_ok=True)
        if write_volumes:
            (out_dir / "volumes").mkdir(parents=True, exist_ok=True)
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        source_id = f"phantom_{i:04d}"
        geom = _sample_geometry_retry(cfg, rng)
        frontal, sagittal = _render_images(geom, rng, source_id)
        samples.append(
            {
                "image_id": source_id,
                "frontal": frontal,
                "sagittal": sagittal,
                "y_mm": geom.y_true_mm,
                "thickness_mm": geom.thickness_mm,
            }
        )
        records.append(
            Annotation(image_id=source_id, annotator=annotator, y_mm=geom.y_true_mm)
        )
        if out_dir is not None:
            save_mip_png(frontal, out_dir / "mips" / f"{source_id}_frontal.png")
            save_mip_png(sagittal, out_dir / "mips" / f"{source_id}_sagittal.png")
            if write_volumes:
                volume = _render_volume(geom, rng, source_id)
                save_volume(volume, out_dir / "volumes" / f"{source_id}.nii.gz")
    if out_dir is not None:
        write_annotations_csv(records, out_dir / "annotations.csv")
    return samples
