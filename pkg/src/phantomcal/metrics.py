"""Segmentation accuracy measures and the cross-validation harness.

Dice and the average symmetric surface distance (ASD) operate on binary
masks; surfaces are mask voxels with at least one of their six face
neighbors outside the mask, with the grid boundary counting as outside.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .calibration import RegionVanishedError
from .segmentation import erode_labels
from .stats import median_iqr
from .volume import ALL_LABELS, HUVolume, ImageGrid, LabelMap


def _as_bool(m: LabelMap | np.ndarray) -> np.ndarray:
    arr = m.labels if isinstance(m, LabelMap) else np.asarray(m)
    return arr != 0


def _check_grids(a: LabelMap | np.ndarray, b: LabelMap | np.ndarray) -> None:
    if isinstance(a, LabelMap) and isinstance(b, LabelMap):
        a.grid.require_compatible(b.grid)


def dice(a: LabelMap | np.ndarray, b: LabelMap | np.ndarray) -> float:
    """Dice overlap 2|A n B| / (|A| + |B|); 1.0 when both masks are empty."""
    _check_grids(a, b)
    ma, mb = _as_bool(a), _as_bool(b)
    if ma.shape != mb.shape:
        raise ValueError(f"mask shapes differ: {ma.shape} vs {mb.shape}")
    sa = int(ma.sum())
    sb = int(mb.sum())
    if sa == 0 and sb == 0:
        return 1.0
    inter = int(np.logical_and(ma, mb).sum())
    return 2.0 * inter / (sa + sb)


def surface_mask(mask: np.ndarray) -> np.ndarray:
    """Mask voxels with a 6-face neighbor outside the mask (grid edge = outside)."""
    m = np.asarray(mask, dtype=bool)
    interior = np.ones_like(m)
    for axis in range(m.ndim):
        lo = [slice(None)] * m.ndim
        hi = [slice(None)] * m.ndim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        fwd = np.zeros_like(m)
        bwd = np.zeros_like(m)
        fwd[tuple(lo)] = m[tuple(hi)]  # neighbor at +axis; edge stays outside
        bwd[tuple(hi)] = m[tuple(lo)]
        interior &= fwd & bwd
    return m & ~interior


def _surface_points_mm(mask: np.ndarray, grid: ImageGrid) -> np.ndarray:
    idx = np.argwhere(surface_mask(mask))  # columns (z, y, x)
    sx, sy, sz = grid.spacing
    ox, oy, oz = grid.origin
    pts = np.empty_like(idx, dtype=np.float64)
    pts[:, 0] = ox + idx[:, 2] * sx
    pts[:, 1] = oy + idx[:, 1] * sy
    pts[:, 2] = oz + idx[:, 0] * sz
    return pts


def asd(a: LabelMap, b: LabelMap) -> float:
    """Average symmetric surface distance in mm between two binary masks."""
    a.grid.require_compatible(b.grid)
    ma, mb = _as_bool(a), _as_bool(b)
    if not ma.any() or not mb.any():
        raise RegionVanishedError([0], "cannot compute surface distance of an empty mask")
    pa = _surface_points_mm(ma, a.grid)
    pb = _surface_points_mm(mb, b.grid)
    d_ab, _ = cKDTree(pb).query(pa)
    d_ba, _ = cKDTree(pa).query(pb)
    return float((d_ab.sum() + d_ba.sum()) / (len(pa) + len(pb)))


def region_hu_abs_diff(v: HUVolume, a: LabelMap, b: LabelMap) -> dict[int, float]:
    """Per label, |mean HU over a's region - mean HU over b's region|."""
    v.grid.require_compatible(a.grid)
    v.grid.require_compatible(b.grid)
    missing = [
        c for c in ALL_LABELS if not np.any(a.labels == c) or not np.any(b.labels == c)
    ]
    if missing:
        raise RegionVanishedError(missing, "label empty in one of the maps")
    out = {}
    for c in ALL_LABELS:
        mean_a = float(v.voxels[a.labels == c].mean())
        mean_b = float(v.voxels[b.labels == c].mean())
        out[c] = abs(mean_a - mean_b)
    return out


@dataclass
class LabelMetrics:
    dice: float
    asd_mm: float
    abs_hu_diff: float


@dataclass
class MetricsReport:
    case_id: str
    site: str
    per_label: dict[int, LabelMetrics]
    pooled_dice: float


def case_metrics(
    v: HUVolume,
    reference: LabelMap,
    predicted: LabelMap,
    hu_erode_radius: int = 3,
) -> MetricsReport:
    """Per-label Dice/ASD on the raw maps plus |dHU| on eroded regions.

    Erosion is applied only for the radiodensity comparison so boundary
    voxels do not dominate the region means.
    """
    reference.grid.require_compatible(predicted.grid)
    ref_er = erode_labels(reference, hu_erode_radius)
    pred_er = erode_labels(predicted, hu_erode_radius)
    hu_diff = region_hu_abs_diff(v, ref_er, pred_er)
    per_label = {}
    for c in ALL_LABELS:
        ref_mask = LabelMap(reference.grid, (reference.labels == c).astype(np.uint8))
        pred_mask = LabelMap(predicted.grid, (predicted.labels == c).astype(np.uint8))
        per_label[c] = LabelMetrics(
            dice=dice(ref_mask, pred_mask),
            asd_mm=asd(ref_mask, pred_mask),
            abs_hu_diff=hu_diff[c],
        )
    pooled = dice(reference.labels != 0, predicted.labels != 0)
    return MetricsReport("", "", per_label, pooled)


@dataclass
class FoldPlan:
    """k-fold split; each case validates exactly once within its site."""

    k: int
    folds: list[tuple[list[str], list[str]]]  # (training ids, validation ids)
    site_of: dict[str, str]


def crossval_split(site_ids: Mapping[str, Sequence[str]], k: int, seed: int) -> FoldPlan:
    """Seeded per-site shuffle into k folds; fold f validates shard f of each site."""
    if k < 2:
        raise ValueError(f"fold count must be >= 2, got {k}")
    for site, ids in site_ids.items():
        if len(ids) % k != 0:
            raise ValueError(f"site {site}: {len(ids)} cases not divisible by {k} folds")
        if len(set(ids)) != len(ids):
            raise ValueError(f"site {site}: duplicate case ids")

    rng = np.random.default_rng(seed)
    shards: dict[str, list[list[str]]] = {}
    for site in sorted(site_ids):
        ids = list(site_ids[site])
        perm = [ids[i] for i in rng.permutation(len(ids))]
        size = len(ids) // k
        shards[site] = [perm[f * size : (f + 1) * size] for f in range(k)]

    site_of = {cid: site for site, ids in site_ids.items() for cid in ids}
    folds = []
    for f in range(k):
        val = [cid for site in sorted(shards) for cid in shards[site][f]]
        val_set = set(val)
        train = [cid for site in sorted(shards) for s in shards[site] for cid in s if cid not in val_set]
        folds.append((train, val))
    return FoldPlan(k, folds, site_of)


def save_fold_plan(plan: FoldPlan, path: str | Path) -> None:
    lines = []
    for f, (train, val) in enumerate(plan.folds):
        for cid in train:
            lines.append(f"{f}\ttrain\t{plan.site_of[cid]}\t{cid}")
        for cid in val:
            lines.append(f"{f}\tval\t{plan.site_of[cid]}\t{cid}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_fold_plan(path: str | Path) -> FoldPlan:
    folds: dict[int, tuple[list[str], list[str]]] = {}
    site_of: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        fold_s, role, site, cid = line.split("\t")
        f = int(fold_s)
        folds.setdefault(f, ([], []))
        folds[f][0 if role == "train" else 1].append(cid)
        site_of[cid] = site
    k = len(folds)
    return FoldPlan(k, [folds[f] for f in range(k)], site_of)


_METRIC_NAMES = ("dice", "asd_mm", "abs_hu_diff", "pooled_dice")


@dataclass
class AggregateSummary:
    rows: list[tuple[str, str, float, float]] = field(default_factory=list)  # metric, scope, median, iqr

    def value(self, metric: str, scope: str = "overall") -> tuple[float, float]:
        for m, s, med, iqr in self.rows:
            if m == metric and s == scope:
                return med, iqr
        raise KeyError(f"no summary row for {metric}/{scope}")


def aggregate_report(
    reports: Sequence[MetricsReport], sites: Sequence[str] | None = None
) -> AggregateSummary:
    """Median and IQR of each metric over all (case, label) observations."""
    if not reports:
        raise ValueError("no reports to aggregate")
    if sites is None:
        sites = sorted({r.site for r in reports if r.site})

    def collect(subset: Sequence[MetricsReport]) -> dict[str, list[float]]:
        obs: dict[str, list[float]] = {m: [] for m in _METRIC_NAMES}
        for r in subset:
            for lm in r.per_label.values():
                obs["dice"].append(lm.dice)
                obs["asd_mm"].append(lm.asd_mm)
                obs["abs_hu_diff"].append(lm.abs_hu_diff)
            obs["pooled_dice"].append(r.pooled_dice)
        return obs

    summary = AggregateSummary()
    scopes: list[tuple[str, Sequence[MetricsReport]]] = [("overall", reports)]
    scopes += [(site, [r for r in reports if r.site == site]) for site in sites]
    for scope, subset in scopes:
        if not subset:
            continue
        for metric, values in collect(subset).items():
            med, iqr = median_iqr(values)
            summary.rows.append((metric, scope, med, iqr))
    return summary


def write_case_metrics_csv(reports: Sequence[MetricsReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case_id", "site", "label", "dice", "asd_mm", "abs_hu_diff"])
        for r in reports:
            for c in sorted(r.per_label):
                lm = r.per_label[c]
                writer.writerow(
                    [r.case_id, r.site, c, f"{lm.dice:.6f}", f"{lm.asd_mm:.6f}", f"{lm.abs_hu_diff:.6f}"]
                )


def write_summary_csv(summary: AggregateSummary, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "scope", "median", "iqr"])
        for metric, scope, med, iqr in summary.rows:
            writer.writerow([metric, scope, f"{med:.6f}", f"{iqr:.6f}"])
