"""Five-region phantom segmentation: a classical slice-wise detector, mask
import for externally produced segmentations, and disk-erosion post-processing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .synth import PhantomGeometry
from .volume import ALL_LABELS, HUVolume, ImageGrid, LabelMap, read_volume

_CONN8 = np.ones((3, 3), dtype=bool)


class PhantomNotFoundError(RuntimeError):
    """No slice yielded a slab with four rod cross-sections."""


class AmbiguousRodAssignmentError(RuntimeError):
    """Rod ordering is not monotone after 3D consistency filtering."""


@dataclass(frozen=True)
class DetectorParams:
    """Priors for the classical detector.

    ``base_hu_window`` brackets urethane-base candidate voxels (the low edge
    sits at the air/base midpoint so the detected boundary tracks the true
    one); ``search_region`` is the fraction of image height, measured from
    the bottom, where the phantom is expected.
    """

    geometry: PhantomGeometry = field(default_factory=PhantomGeometry)
    base_hu_window: tuple[float, float] = (-500.0, 25.0)
    rod_hu_margin: float = 25.0
    search_region: float = 0.5
    min_component_voxels: int = 400

    def __post_init__(self):
        lo, hi = self.base_hu_window
        if lo >= hi:
            raise ValueError("base_hu_window must satisfy lo < hi")
        if self.rod_hu_margin <= 0:
            raise ValueError("rod_hu_margin must be positive")
        if not 0.0 < self.search_region <= 1.0:
            raise ValueError("search_region must lie in (0, 1]")


@dataclass
class _SliceDetection:
    filled_slab: np.ndarray  # bool (ny, nx)
    rod_centroids: list[tuple[float, float]]  # world mm, ascending x


def _detect_slice(hu2d: np.ndarray, xw: np.ndarray, yw: np.ndarray, p: DetectorParams,
                  y_min_row: int, pixel_area: float) -> _SliceDetection | None:
    lo, hi = p.base_hu_window
    cand = (hu2d >= lo) & (hu2d <= hi)
    cand[:y_min_row, :] = False
    if not cand.any():
        return None

    comp, n = ndimage.label(cand, structure=_CONN8)
    sizes = np.bincount(comp.ravel())[1:]
    best = int(np.argmax(sizes))
    if sizes[best] < p.min_component_voxels:
        return None
    slab = comp == best + 1
    filled = ndimage.binary_fill_holes(slab)
    slab_median = float(np.median(hu2d[slab]))

    rod_cand = filled & (hu2d >= slab_median + p.rod_hu_margin)
    rcomp, rn = ndimage.label(rod_cand, structure=_CONN8)
    if rn < 4:
        return None

    r = p.geometry.rod_radius
    area_expected = math.pi * r * r
    rods = []
    for ci in range(1, rn + 1):
        mask = rcomp == ci
        area = float(mask.sum()) * pixel_area
        if not 0.35 * area_expected <= area <= 2.0 * area_expected:
            continue
        cx = float(xw[mask].mean())
        cy = float(yw[mask].mean())
        rms = math.sqrt(float(((xw[mask] - cx) ** 2 + (yw[mask] - cy) ** 2).mean()))
        if rms > 0.9 * r:  # thin arcs and blobs fail the disk shape test
            continue
        rods.append((abs(area - area_expected), cx, cy))
    if len(rods) < 4:
        return None
    rods.sort(key=lambda t: t[0])
    picked = sorted(((cx, cy) for _, cx, cy in rods[:4]), key=lambda t: t[0])
    return _SliceDetection(filled_slab=filled, rod_centroids=picked)


def segment_classical(v: HUVolume, p: DetectorParams | None = None) -> LabelMap:
    """Slice-wise geometric detection of the slab and its four rods.

    Per slice: threshold the base window inside the search region, keep the
    largest 8-connected component as the slab, find rod cross-sections as
    hot components inside the filled slab, match each against a disk of the
    prior radius, and label rods 2-5 by ascending centroid x. Slices whose
    rod centroids stray more than two rod radii from the per-rod median line
    along z are discarded. Detected rods are written as ideal disks around
    their centroids; the remaining filled slab becomes label 1.
    """
    p = p or DetectorParams()
    grid = v.grid
    nz, ny, nx = grid.shape_zyx
    xw, yw = grid.plane_coords()
    y_min_row = int(math.floor(ny * (1.0 - p.search_region)))
    pixel_area = grid.spacing[0] * grid.spacing[1]

    detections: dict[int, _SliceDetection] = {}
    for iz in range(nz):
        det = _detect_slice(v.voxels[iz], xw, yw, p, y_min_row, pixel_area)
        if det is not None:
            detections[iz] = det
    if not detections:
        raise PhantomNotFoundError("phantom not found: no slice shows a slab with 4 rods")

    # 3D consistency: rods are straight lines along z, so centroids must sit
    # near the per-rod median position.
    cents = np.array([[det.rod_centroids[k] for k in range(4)] for det in detections.values()])
    med = np.median(cents, axis=0)  # (4, 2)
    limit = 2.0 * p.geometry.rod_radius
    kept: dict[int, _SliceDetection] = {}
    for iz, det in detections.items():
        dev = max(
            math.hypot(det.rod_centroids[k][0] - med[k, 0], det.rod_centroids[k][1] - med[k, 1])
            for k in range(4)
        )
        if dev <= limit:
            kept[iz] = det
    if not kept:
        raise PhantomNotFoundError("phantom not found: all slices rejected as inconsistent")

    med_x = np.median(
        np.array([[det.rod_centroids[k][0] for k in range(4)] for det in kept.values()]), axis=0
    )
    if not all(a < b for a, b in zip(med_x, med_x[1:])):
        raise AmbiguousRodAssignmentError(f"ambiguous rod assignment: median x {med_x.tolist()}")

    out = np.zeros(grid.shape_zyx, dtype=np.uint8)
    r2 = p.geometry.rod_radius**2
    for iz, det in kept.items():
        plane = out[iz]
        plane[det.filled_slab] = 1
        for k, (cx, cy) in enumerate(det.rod_centroids):
            disk = (xw - cx) ** 2 + (yw - cy) ** 2 <= r2
            plane[disk] = 2 + k
    return LabelMap(grid, out)


def import_mask(path, target: ImageGrid) -> LabelMap:
    """Read an externally produced label map and verify it fits ``target``."""
    vol = read_volume(path)
    if not isinstance(vol, LabelMap):
        raise ValueError(f"{path}: expected a MET_UCHAR label map, got {type(vol).__name__}")
    target.require_compatible(vol.grid)
    return vol


def erode_labels(m: LabelMap, radius_px: int = 3) -> LabelMap:
    """Erode each label 1-5 independently by a disk, per axial slice.

    A voxel keeps its label iff every offset with dx^2 + dy^2 <= r^2 lands on
    the same label within the slice; removed voxels become background. This
    holds exactly when the squared distance to the nearest other-label or
    out-of-grid pixel exceeds r^2, so the exact Euclidean distance transform
    of each padded slice decides survival. Radius 0 is the identity.
    """
    radius_px = int(radius_px)
    if radius_px < 0:
        raise ValueError("radius must be >= 0")
    if radius_px == 0:
        return LabelMap(m.grid, m.labels.copy())
    r2 = radius_px * radius_px
    out = np.zeros_like(m.labels)
    for code in ALL_LABELS:
        mask = m.labels == code
        if not mask.any():
            continue
        for iz in range(mask.shape[0]):
            if not mask[iz].any():
                continue
            padded = np.pad(mask[iz], 1)  # grid boundary counts as outside
            dist = ndimage.distance_transform_edt(padded)
            d2 = np.rint(dist * dist)  # squared distances are exact integers
            out[iz][d2[1:-1, 1:-1] > r2] = code
    return LabelMap(m.grid, out)


def rod_centroids(m: LabelMap) -> dict[int, tuple[float, float, float] | None]:
    """Mean world coordinates (mm) of each label's voxels; None when absent."""
    sx, sy, sz = m.grid.spacing
    ox, oy, oz = m.grid.origin
    out: dict[int, tuple[float, float, float] | None] = {}
    for code in ALL_LABELS:
        idx = np.argwhere(m.labels == code)
        if len(idx) == 0:
            out[code] = None
            continue
        zc, yc, xc = idx.mean(axis=0)
        out[code] = (ox + xc * sx, oy + yc * sy, oz + zc * sz)
    return out
