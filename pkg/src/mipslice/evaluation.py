"""Localization error statistics, inter-rater analysis, and timing harness.

Errors are reported both in mm and in slices (mm divided by the source
slice thickness, without rounding). Outliers are errors above 10 mm.
The median of an even-length sample is the lower of the two central
values, matching integer-valued published medians.
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

OUTLIER_THRESHOLD_MM = 10.0


def lower_median(values) -> float:
    """Median as the lower central value for even-length inputs."""
    ordered = sorted(values)
    if not ordered:
        raise ValueError("median of empty sequence")
    return float(ordered[(len(ordered) - 1) // 2])


@dataclass(frozen=True)
class ErrorStats:
    mean_mm: float
    std_mm: float
    median_mm: float
    max_mm: float
    mean_slice: float
    std_slice: float
    median_slice: float
    max_slice: float
    count_gt_10: int
    n: int

    def row_mm(self):
        return (self.mean_mm, self.std_mm, self.median_mm, self.max_mm, self.count_gt_10)

    def row_slice(self):
        return (
            self.mean_slice,
            self.std_slice,
            self.median_slice,
            self.max_slice,
            self.count_gt_10,
        )


def _stats(err_mm: np.ndarray, err_slice: np.ndarray) -> ErrorStats:
    return ErrorStats(
        mean_mm=float(err_mm.mean()),
        std_mm=float(err_mm.std()),
        median_mm=lower_median(err_mm),
        max_mm=float(err_mm.max()),
        mean_slice=float(err_slice.mean()),
        std_slice=float(err_slice.std()),
        median_slice=lower_median(err_slice),
        max_slice=float(err_slice.max()),
        count_gt_10=int((err_mm > OUTLIER_THRESHOLD_MM).sum()),
        n=len(err_mm),
    )


def localization_errors(preds, gts, thicknesses) -> ErrorStats:
    """Absolute errors of predictions vs ground truth, in mm and slices."""
    preds, gts = np.asarray(preds, dtype=float), np.asarray(gts, dtype=float)
    thicknesses = np.asarray(thicknesses, dtype=float)
    if not (len(preds) == len(gts) == len(thicknesses)):
        raise ValueError(
            f"length mismatch: {len(preds)} preds, {len(gts)} gts,"
            f" {len(thicknesses)} thicknesses"
        )
    if np.any(thicknesses <= 0):
        raise ValueError("slice thicknesses must be positive")
    err_mm = np.abs(preds - gts)
    err_slice = err_mm / thicknesses
    return _stats(err_mm, err_slice)


def interrater_stats(ann_a, ann_b, thicknesses) -> tuple[ErrorStats, ErrorStats]:
    """Inter-rater arithmetic: A vs B, and each rater vs the merged truth.

    The merged ground truth per image is the floor of the rater mean; the
    second statistic pools both raters' deviations from it.
    """
    ann_a, ann_b = np.asarray(ann_a, dtype=float), np.asarray(ann_b, dtype=float)
    thicknesses = np.asarray(thicknesses, dtype=float)
    if not (len(ann_a) == len(ann_b) == len(thicknesses)):
        raise ValueError("annotation lists must be paired per image")
    a_vs_b = localization_errors(ann_a, ann_b, thicknesses)
    merged = np.floor((ann_a + ann_b) / 2.0)
    each_vs_mean = localization_errors(
        np.concatenate([ann_a, ann_b]),
        np.concatenate([merged, merged]),
        np.concatenate([thicknesses, thicknesses]),
    )
    return a_vs_b, each_vs_mean


def format_stats_table(named_stats: dict[str, ErrorStats]) -> str:
    """Text table with the published column layout (mean/std/median/max/>10)."""
    header = f"{'':42s} {'mean':>8s} {'std':>8s} {'median':>8s} {'max':>8s} {'> 10':>6s}"
    lines = [header, "-" * len(header)]
    for name, stats in named_stats.items():
        for label, row in (("error (mm)", stats.row_mm()), ("error (slice)", stats.row_slice())):
            mean, std, median, mx, gt10 = row
            lines.append(
                f"{name + ' - ' + label:42s} {mean:8.2f} {std:8.2f} {median:8.2f}"
                f" {mx:8.2f} {gt10:6d}"
            )
    return "\n".join(lines)


def write_stats_csv(named_stats: dict[str, ErrorStats], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["name", "unit", "mean", "std", "median", "max", "count_gt_10", "n"]
        )
        for name, s in named_stats.items():
            writer.writerow(["%s" % name, "mm", s.mean_mm, s.std_mm, s.median_mm, s.max_mm, s.count_gt_10, s.n])
            writer.writerow(["%s" % name, "slice", s.mean_slice, s.std_slice, s.median_slice, s.max_slice, s.count_gt_10, s.n])


@dataclass
class TimingReport:
    medians_s: dict[str, float]
    runs: int

    def ratio(self, slow: str, fast: str) -> float:
        return self.medians_s[slow] / self.medians_s[fast]

    def format_table(self) -> str:
        lines = [f"{'predictor':30s} {'median_s':>10s}  ({self.runs} timed runs)"]
        for name, t in self.medians_s.items():
            lines.append(f"{name:30s} {t:10.4f}")
        return "\n".join(lines)


def benchmark(predictors: dict[str, callable], images, runs: int = 10, warmup: int = 2) -> TimingReport:
    """Median wall time per predictor over the image set.

    Each predictor is a callable image -> result; timings cover all images
    per run. Two warmup runs precede the timed ones.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    medians = {}
    for name, fn in predictors.items():
        for _ in range(warmup):
            for img in images:
                fn(img)
        times = []
        for _ in range(runs):
            start = time.perf_counter()
            for img in images:
                fn(img)
            times.append(time.perf_counter() - start)
        medians[name] = statistics.median(times)
    return TimingReport(medians_s=medians, runs=runs)
