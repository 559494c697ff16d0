"""Per-region radiodensity statistics, the HU-to-density regression, the
manual three-slice ROI emulation, and cross-site model comparison.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .stats import bh_adjust, mann_whitney_u
from .volume import ALL_LABELS, LABEL_DENSITIES, DensityVolume, HUVolume, LabelMap

PHANTOM_DENSITIES = (0.0, 50.0, 100.0, 150.0, 200.0)
SUMMARY_HU = (0, 200, 400, 600)


class RegionVanishedError(RuntimeError):
    """One or more labels have no voxels (typically after over-erosion)."""

    def __init__(self, labels: Sequence[int], message: str | None = None):
        self.labels = list(labels)
        super().__init__(message or f"region vanished for labels {self.labels}")


class DegenerateFitError(RuntimeError):
    """The regression inputs carry no HU variance."""


@dataclass
class LabelStats:
    voxel_count: int
    mean: float
    median: float
    sd: float  # population (divide by N)
    hist_lo: int  # first integer-HU bin
    hist_counts: np.ndarray


@dataclass
class RegionStats:
    per_label: dict[int, LabelStats]

    def hu_values(self, statistic: str = "mean") -> list[float]:
        if statistic not in ("mean", "median"):
            raise ValueError(f"statistic must be 'mean' or 'median', got {statistic!r}")
        return [getattr(self.per_label[c], statistic) for c in ALL_LABELS]


def region_statistics(v: HUVolume, m: LabelMap) -> RegionStats:
    """Voxel statistics of each label 1-5; every label must be non-empty."""
    v.grid.require_compatible(m.grid)
    missing = [c for c in ALL_LABELS if not np.any(m.labels == c)]
    if missing:
        raise RegionVanishedError(missing)
    per_label = {}
    for c in ALL_LABELS:
        samples = v.voxels[m.labels == c]
        lo = int(math.floor(samples.min()))
        hi = int(math.floor(samples.max()))
        bins = np.floor(samples).astype(np.int64) - lo
        counts = np.bincount(bins, minlength=hi - lo + 1)
        per_label[c] = LabelStats(
            voxel_count=int(samples.size),
            mean=float(samples.mean()),
            median=float(np.median(samples)),
            sd=float(samples.std()),
            hist_lo=lo,
            hist_counts=counts,
        )
    return RegionStats(per_label)


@dataclass
class CalibrationModel:
    """density = slope * HU + intercept, fitted over the five region points."""

    slope: float
    intercept: float
    r: float
    points: list[tuple[float, float]]  # (HU, density)
    residuals: list[float]  # density - predicted
    case_id: str = ""

    def predict(self, hu) -> np.ndarray:
        return self.slope * np.asarray(hu, dtype=np.float64) + self.intercept


def _fit_points(hu: Sequence[float], densities: Sequence[float], case_id: str = "") -> CalibrationModel:
    x = np.asarray(hu, dtype=np.float64)
    y = np.asarray(densities, dtype=np.float64)
    if len(x) != len(y) or len(x) != len(PHANTOM_DENSITIES):
        raise ValueError(f"expected {len(PHANTOM_DENSITIES)} points, got {len(x)}")
    xm = x - x.mean()
    ym = y - y.mean()
    sxx = float(xm @ xm)
    if sxx == 0.0:
        raise DegenerateFitError("degenerate fit: HU values carry no variance")
    sxy = float(xm @ ym)
    syy = float(ym @ ym)
    slope = sxy / sxx
    intercept = float(y.mean() - slope * x.mean())
    r = sxy / math.sqrt(sxx * syy) if syy > 0 else 0.0
    predicted = slope * x + intercept
    return CalibrationModel(
        slope=slope,
        intercept=intercept,
        r=float(r),
        points=list(zip(x.tolist(), y.tolist())),
        residuals=(y - predicted).tolist(),
        case_id=case_id,
    )


def fit_calibration(
    stats: RegionStats,
    densities: Sequence[float] = PHANTOM_DENSITIES,
    statistic: str = "mean",
    case_id: str = "",
) -> CalibrationModel:
    """Ordinary least squares of density on the per-region HU statistic."""
    return _fit_points(stats.hu_values(statistic), densities, case_id)


@dataclass
class RoiSpec:
    """Manual measurement: per-rod circles sampled on three axial slices."""

    slice_indices: tuple[int, int, int]
    rod_centers: list[tuple[float, float]]  # world mm (x, y), ascending density
    rod_radius: float = 4.0

    def __post_init__(self):
        if len(set(self.slice_indices)) != 3:
            raise ValueError("need three distinct slice indices")
        if len(self.rod_centers) != 4:
            raise ValueError("need one circle center per rod")
        if self.rod_radius <= 0:
            raise ValueError("radius must be positive")


def _circle_mean(v: HUVolume, iz: int, center: tuple[float, float], radius: float) -> float:
    nz = v.grid.dims[2]
    if not 0 <= iz < nz:
        raise ValueError(f"slice index {iz} out of range [0, {nz})")
    xw, yw = v.grid.plane_coords()
    mask = (xw - center[0]) ** 2 + (yw - center[1]) ** 2 <= radius**2
    if not mask.any():
        raise ValueError(f"circle at {center} covers no voxel centers")
    return float(v.voxels[iz][mask].mean())


def manual_roi_calibration(
    v: HUVolume,
    roi: RoiSpec,
    densities: Sequence[float] = PHANTOM_DENSITIES,
    case_id: str = "",
) -> CalibrationModel:
    """Emulate the manual protocol: per-rod circle means averaged over three
    slices, a base-material circle midway between the first two rods, then
    the same least-squares fit as the automated path.
    """
    base_center = (
        0.5 * (roi.rod_centers[0][0] + roi.rod_centers[1][0]),
        0.5 * (roi.rod_centers[0][1] + roi.rod_centers[1][1]),
    )
    centers = [base_center] + list(roi.rod_centers)
    hu = [
        float(np.mean([_circle_mean(v, iz, c, roi.rod_radius) for iz in roi.slice_indices]))
        for c in centers
    ]
    return _fit_points(hu, densities, case_id)


def apply_calibration(v: HUVolume, model: CalibrationModel) -> DensityVolume:
    """Map every voxel through density = slope * HU + intercept (no clamping)."""
    return DensityVolume(v.grid, model.predict(v.voxels).astype(np.float32))


@dataclass
class ModelComparison:
    hu: np.ndarray  # integer grid lo..hi
    median_a: np.ndarray
    iqr_a: np.ndarray  # (n, 2) quartiles
    median_b: np.ndarray
    iqr_b: np.ndarray
    diff: np.ndarray  # median_a - median_b
    p: np.ndarray
    p_adj: np.ndarray
    significant: np.ndarray
    summary: list[tuple[int, float, float, float]]  # (HU, median_a, median_b, diff)

    def significant_ranges(self) -> list[tuple[int, int]]:
        """Maximal contiguous HU intervals flagged significant."""
        ranges = []
        start = None
        for h, sig in zip(self.hu.tolist(), self.significant.tolist()):
            if sig and start is None:
                start = h
            elif not sig and start is not None:
                ranges.append((start, h - 1))
                start = None
        if start is not None:
            ranges.append((start, int(self.hu[-1])))
        return ranges


def compare_models(
    site_a: Sequence[CalibrationModel],
    site_b: Sequence[CalibrationModel],
    lo: int = -100,
    hi: int = 700,
    alpha_level: float = 0.05,
) -> ModelComparison:
    """Evaluate both sites' models on an integer HU grid and test per-HU
    differences with Mann-Whitney U, Benjamini-Hochberg adjusted across the
    whole grid jointly.
    """
    if lo > hi:
        raise ValueError(f"invalid HU range: {lo} > {hi}")
    if not site_a or not site_b:
        raise ValueError("both site model lists must be non-empty")

    hu = np.arange(lo, hi + 1)
    vals_a = np.array([m.predict(hu) for m in site_a])  # (cases, n)
    vals_b = np.array([m.predict(hu) for m in site_b])
    q_a = np.quantile(vals_a, [0.25, 0.5, 0.75], axis=0)
    q_b = np.quantile(vals_b, [0.25, 0.5, 0.75], axis=0)
    med_a, med_b = q_a[1], q_b[1]
    diff = med_a - med_b

    p = np.array([mann_whitney_u(vals_a[:, i], vals_b[:, i]).p_two_sided for i in range(len(hu))])
    p_adj = np.asarray(bh_adjust(p.tolist()))
    significant = p_adj < alpha_level

    summary = [
        (h, float(med_a[h - lo]), float(med_b[h - lo]), float(diff[h - lo]))
        for h in SUMMARY_HU
        if lo <= h <= hi
    ]
    return ModelComparison(
        hu=hu,
        median_a=med_a,
        iqr_a=np.stack([q_a[0], q_a[2]], axis=1),
        median_b=med_b,
        iqr_b=np.stack([q_b[0], q_b[2]], axis=1),
        diff=diff,
        p=p,
        p_adj=p_adj,
        significant=significant,
        summary=summary,
    )


def write_comparison_csv(cmp: ModelComparison, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["hu", "median_a", "iqr_a_lo", "iqr_a_hi", "median_b", "iqr_b_lo", "iqr_b_hi",
             "diff", "p", "p_adj", "significant"]
        )
        for i, h in enumerate(cmp.hu.tolist()):
            writer.writerow(
                [
                    h,
                    f"{cmp.median_a[i]:.6f}",
                    f"{cmp.iqr_a[i, 0]:.6f}",
                    f"{cmp.iqr_a[i, 1]:.6f}",
                    f"{cmp.median_b[i]:.6f}",
                    f"{cmp.iqr_b[i, 0]:.6f}",
                    f"{cmp.iqr_b[i, 1]:.6f}",
                    f"{cmp.diff[i]:.6f}",
                    f"{cmp.p[i]:.6g}",
                    f"{cmp.p_adj[i]:.6g}",
                    int(cmp.significant[i]),
                ]
            )


def save_model(model: CalibrationModel, path: str | Path) -> None:
    """Plain-text model record; floats keep full round-trip precision."""
    pts = " ".join(f"{hu!r}:{d!r}" for hu, d in model.points)
    res = " ".join(repr(r) for r in model.residuals)
    text = (
        f"slope = {model.slope!r}\n"
        f"intercept = {model.intercept!r}\n"
        f"r = {model.r!r}\n"
        f"points = {pts}\n"
        f"residuals = {res}\n"
        f"case_id = {model.case_id}\n"
    )
    Path(path).write_text(text)


def load_model(path: str | Path) -> CalibrationModel:
    fields: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    try:
        points = [
            (float(pair.split(":")[0]), float(pair.split(":")[1]))
            for pair in fields["points"].split()
        ]
        return CalibrationModel(
            slope=float(fields["slope"]),
            intercept=float(fields["intercept"]),
            r=float(fields["r"]),
            points=points,
            residuals=[float(t) for t in fields["residuals"].split()],
            case_id=fields.get("case_id", ""),
        )
    except (KeyError, ValueError, IndexError) as exc:
        raise ValueError(f"malformed model record {path}: {exc}") from exc
