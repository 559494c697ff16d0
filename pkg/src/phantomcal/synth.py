"""Synthetic CT case generator: a deformable calibration slab under a body
cross-section, rendered through a configurable scanner law with optional
artifacts, together with ground-truth label maps.

World axes follow image convention: x left-right, y top-to-bottom of an
axial slice (the phantom sits at large y), z through the slice stack.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .volume import (
    HU_AIR,
    HU_MAX,
    HU_MIN,
    LABEL_DENSITIES,
    HUVolume,
    ImageGrid,
    LabelMap,
    write_volume,
)


@dataclass(frozen=True)
class PhantomGeometry:
    """Slab cross-section in mm with four parallel density rods along z."""

    slab_width: float = 240.0
    slab_height: float = 40.0
    slab_length: float = 300.0
    rod_radius: float = 6.0
    rod_pitch: float = 40.0
    rod_densities: tuple[float, ...] = (50.0, 100.0, 150.0, 200.0)
    base_density: float = 0.0

    def __post_init__(self):
        if 4 * self.rod_pitch + 2 * self.rod_radius >= self.slab_width:
            raise ValueError("rods do not fit inside the slab width")
        if 2 * self.rod_radius >= self.slab_height:
            raise ValueError("rod diameter exceeds slab height")
        d = self.rod_densities
        if len(d) != 4 or any(b <= a for a, b in zip(d, d[1:])) or d[0] <= self.base_density:
            raise ValueError("rod densities must be strictly increasing above the base")

    def rod_offsets(self) -> np.ndarray:
        """Rod center x offsets from the slab center, ascending."""
        return (np.arange(4) - 1.5) * self.rod_pitch


@dataclass(frozen=True)
class DeformationSpec:
    """Parabolic vertical bow (sagitta, mm) plus in-plane tilt (degrees)."""

    sagitta: float = 0.0
    axial_tilt: float = 0.0

    def __post_init__(self):
        if abs(self.axial_tilt) > 15.0:
            raise ValueError(f"axial tilt limited to 15 degrees, got {self.axial_tilt}")


@dataclass(frozen=True)
class ScannerModel:
    """Forward rendering law HU = alpha * density + beta, plus blur and noise."""

    alpha: float
    beta: float
    noise_sd: float = 0.0
    kernel_blur_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.noise_sd < 0 or self.kernel_blur_sd < 0:
            raise ValueError("noise_sd and kernel_blur_sd must be non-negative")


@dataclass(frozen=True)
class MetalStreaks:
    count: int = 2
    amplitude: float = 800.0
    width: float = 4.0
    slice_range: tuple[int, int] = (0, 0)  # inclusive z-index interval

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("streak amplitude must be >= 0")


@dataclass(frozen=True)
class PartialFov:
    crop_fraction: float = 0.2  # fraction of slab width pushed outside the grid

    def __post_init__(self):
        if not 0.0 <= self.crop_fraction < 0.5:
            raise ValueError("crop fraction must lie in [0, 0.5)")


@dataclass(frozen=True)
class HalationPatches:
    count: int = 2
    amplitude: float = 300.0
    radius: float = 8.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("halation amplitude must be >= 0")


@dataclass(frozen=True)
class ArtifactSpec:
    metal_streaks: MetalStreaks | None = None
    partial_fov: PartialFov | None = None
    halation_patches: HalationPatches | None = None


NO_ARTIFACTS = ArtifactSpec()


@dataclass(frozen=True)
class BodyModel:
    """Axial soft-tissue ellipse with one ellipsoidal bone insert.

    Centers are world mm; ``center`` may be None, in which case the case
    builder rests the body ``gap`` mm above the slab.
    """

    axes: tuple[float, float] = (85.0, 55.0)  # semi-axes (x, y), mm
    soft_tissue_hu: float = 40.0
    bone_hu: float = 400.0
    bone_axes: tuple[float, float, float] = (20.0, 15.0, 30.0)
    gap: float = 4.0
    center: tuple[float, float] | None = None


@dataclass
class CaseSpec:
    grid: ImageGrid
    geometry: PhantomGeometry = field(default_factory=PhantomGeometry)
    deformation: DeformationSpec = field(default_factory=DeformationSpec)
    scanner: ScannerModel = field(default_factory=lambda: ScannerModel(alpha=1.2, beta=-20.0))
    artifacts: ArtifactSpec = NO_ARTIFACTS
    body: BodyModel | None = field(default_factory=BodyModel)
    placement: tuple[float, float, float] | None = None  # slab center, world mm


def rasterize_phantom(
    geometry: PhantomGeometry,
    deformation: DeformationSpec,
    grid: ImageGrid,
    placement: tuple[float, float, float],
) -> LabelMap:
    """Label voxels by the deformed solid containing their center.

    Rods get codes 2-5 ordered by increasing undeformed center x; the slab
    remainder is 1. Points are tested by inverting the deformation: untilt
    about the slab center, then remove the parabolic bow column by column.
    """
    if abs(deformation.sagitta) > geometry.slab_height:
        raise ValueError("sagitta exceeds slab height")
    cx, cy, cz = placement
    half_w = geometry.slab_width / 2.0
    half_h = geometry.slab_height / 2.0
    half_l = geometry.slab_length / 2.0

    xw, yw = grid.plane_coords()
    theta = math.radians(deformation.axial_tilt)
    ct, st = math.cos(theta), math.sin(theta)
    # inverse rotation about the slab center
    lx = ct * (xw - cx) + st * (yw - cy)
    ly_def = -st * (xw - cx) + ct * (yw - cy)

    u = (lx + half_w) / geometry.slab_width
    in_width = (u >= 0.0) & (u <= 1.0)
    bow = deformation.sagitta * (1.0 - (2.0 * u - 1.0) ** 2)
    ly = np.where(in_width, ly_def - bow, np.inf)

    cross = np.zeros(lx.shape, dtype=np.uint8)
    cross[in_width & (np.abs(ly) <= half_h)] = 1
    r2 = geometry.rod_radius**2
    for k, off in enumerate(geometry.rod_offsets()):
        cross[(lx - off) ** 2 + ly**2 <= r2] = 2 + k

    labels = np.zeros(grid.shape_zyx, dtype=np.uint8)
    z_centers = grid.axis_centers(2)
    for iz, z in enumerate(z_centers):
        if abs(z - cz) <= half_l:
            labels[iz] = cross
    if not labels.any():
        raise ValueError("slab entirely outside the grid")
    return LabelMap(grid, labels)


def _sub_rngs(seed: int, n: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.default_rng(c) for c in children]


def render_ct(gt: LabelMap, spec: CaseSpec) -> HUVolume:
    """Render HU from the ground-truth labels through the scanner law.

    Composition order: air background, body ellipse + bone insert, phantom
    materials at alpha*density + beta, Gaussian blur, Gaussian noise, then
    additive artifacts, clamped to the 12-bit CT range.
    """
    gt.grid.require_compatible(spec.grid)
    grid = gt.grid
    sc = spec.scanner
    hu = np.full(grid.shape_zyx, HU_AIR, dtype=np.float64)

    if spec.body is not None and spec.body.center is not None:
        body = spec.body
        bx, by = body.center
        xw, yw = grid.plane_coords()
        ellipse = ((xw - bx) / body.axes[0]) ** 2 + ((yw - by) / body.axes[1]) ** 2 <= 1.0
        hu[:, ellipse] = body.soft_tissue_hu
        zc = grid.axis_centers(2)
        bz = float(zc.mean())
        ax, ay, az = body.bone_axes
        bone2d = ((xw - bx) / ax) ** 2 + ((yw - by) / ay) ** 2
        for iz, z in enumerate(zc):
            mask = bone2d + ((z - bz) / az) ** 2 <= 1.0
            hu[iz][mask] = body.bone_hu

    for code, density in LABEL_DENSITIES.items():
        sel = gt.labels == code
        if sel.any():
            hu[sel] = sc.alpha * density + sc.beta

    if sc.kernel_blur_sd > 0:
        sx, sy, sz = grid.spacing
        sigma = (sc.kernel_blur_sd / sz, sc.kernel_blur_sd / sy, sc.kernel_blur_sd / sx)
        hu = ndimage.gaussian_filter(hu, sigma=sigma)

    rng_noise, rng_streak, rng_halo = _sub_rngs(sc.seed, 3)
    if sc.noise_sd > 0:
        hu += rng_noise.normal(0.0, sc.noise_sd, size=hu.shape)

    art = spec.artifacts
    if art.metal_streaks is not None:
        _add_streaks(hu, grid, art.metal_streaks, rng_streak)
    if art.halation_patches is not None:
        _add_halation(hu, grid, gt, art.halation_patches, rng_halo)

    np.clip(hu, HU_MIN, HU_MAX, out=hu)
    return HUVolume(grid, hu)


def _add_streaks(hu, grid, spec: MetalStreaks, rng) -> None:
    xw, yw = grid.plane_coords()
    x_mid = float(xw.mean())
    y_mid = float(yw.mean())
    extent = max(float(np.ptp(xw)), float(np.ptp(yw)))
    z_lo, z_hi = spec.slice_range
    z_lo = max(0, z_lo)
    z_hi = min(grid.dims[2] - 1, z_hi)
    for _ in range(spec.count):
        angle = rng.uniform(0.0, math.pi)
        x0 = x_mid + rng.uniform(-0.15, 0.15) * extent
        y0 = y_mid + rng.uniform(-0.15, 0.15) * extent
        dist = np.abs(math.cos(angle) * (yw - y0) - math.sin(angle) * (xw - x0))
        band = dist <= spec.width / 2.0
        for iz in range(z_lo, z_hi + 1):
            hu[iz][band] += spec.amplitude


def _add_halation(hu, grid, gt: LabelMap, spec: HalationPatches, rng) -> None:
    # bright blobs placed on the phantom boundary region, where they disturb
    # both segmentation and region statistics
    fg = np.argwhere(gt.labels != 0)
    if len(fg) == 0:
        return
    xw, yw = grid.plane_coords()
    sigma = spec.radius / 2.0
    for _ in range(spec.count):
        z, y, x = fg[rng.integers(len(fg))]
        cx = xw[y, x]
        cy = yw[y, x]
        bump = spec.amplitude * np.exp(-(((xw - cx) ** 2 + (yw - cy) ** 2) / (2.0 * sigma**2)))
        hu[z] += bump


def default_placement(spec: CaseSpec, bottom_margin: float = 6.0) -> tuple[float, float, float]:
    """Slab center: x centered (or FOV-cropped), resting near the grid bottom."""
    grid = spec.grid
    x = grid.axis_centers(0)
    y = grid.axis_centers(1)
    z = grid.axis_centers(2)
    geom = spec.geometry
    cx = float((x[0] + x[-1]) / 2.0)
    if spec.artifacts.partial_fov is not None:
        f = spec.artifacts.partial_fov.crop_fraction
        cx = float(x[0]) - f * geom.slab_width + geom.slab_width / 2.0
    sag_down = max(spec.deformation.sagitta, 0.0)
    cy = float(y[-1]) - bottom_margin - geom.slab_height / 2.0 - sag_down
    cz = float((z[0] + z[-1]) / 2.0)
    return (cx, cy, cz)


def build_case(spec: CaseSpec) -> tuple[LabelMap, HUVolume]:
    """Place, rasterize and render one case; returns (ground truth, HU volume)."""
    placement = spec.placement or default_placement(spec)
    body = spec.body
    if body is not None and body.center is None:
        slab_top = placement[1] - spec.geometry.slab_height / 2.0
        center = (placement[0] if spec.artifacts.partial_fov is None else float(np.mean(spec.grid.axis_centers(0))),
                  slab_top - body.gap - body.axes[1])
        body = replace(body, center=center)
    resolved = replace(spec, placement=placement, body=body)
    gt = rasterize_phantom(resolved.geometry, resolved.deformation, resolved.grid, placement)
    return gt, render_ct(gt, resolved)


@dataclass(frozen=True)
class JitterSpec:
    """Per-case deterministic variation applied to a site template."""

    alpha_rel_sd: float = 0.004
    beta_sd: float = 0.3
    sagitta_span: float = 1.0  # uniform +/- around the template value
    tilt_sd: float = 1.0
    shift_span: float = 4.0  # uniform +/- x/y placement shift, mm


DEFAULT_JITTER = JitterSpec()


@dataclass(frozen=True)
class CaseRecord:
    case_id: str
    site: str
    volume_path: str  # relative to the manifest directory
    label_path: str
    alpha: float
    beta: float
    noise_sd: float
    sagitta: float


@dataclass
class DatasetManifest:
    records: list[CaseRecord]
    root: Path

    def resolve(self, rel: str) -> Path:
        return self.root / rel


MANIFEST_NAME = "manifest.tsv"


def case_seed(master_seed: int, case_id: str) -> int:
    digest = hashlib.sha256(f"{master_seed}:{case_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _jittered(template: CaseSpec, site: str, case_id: str, master_seed: int, jitter: JitterSpec) -> CaseSpec:
    rng = np.random.default_rng(case_seed(master_seed, case_id))
    sc = template.scanner
    alpha = sc.alpha * (1.0 + rng.normal(0.0, jitter.alpha_rel_sd))
    beta = sc.beta + rng.normal(0.0, jitter.beta_sd)
    defo = template.deformation
    sagitta = defo.sagitta + rng.uniform(-jitter.sagitta_span, jitter.sagitta_span)
    tilt = float(np.clip(defo.axial_tilt + rng.normal(0.0, jitter.tilt_sd), -15.0, 15.0))
    spec = replace(
        template,
        scanner=replace(sc, alpha=alpha, beta=beta, seed=case_seed(master_seed, case_id + ":noise")),
        deformation=DeformationSpec(sagitta=sagitta, axial_tilt=tilt),
    )
    base = default_placement(spec)
    dx = rng.uniform(-jitter.shift_span, jitter.shift_span)
    dy = rng.uniform(-jitter.shift_span / 2.0, 0.0)  # never push the slab off the bottom
    spec.placement = (base[0] + dx, base[1] + dy, base[2])
    return spec


def _params_text(spec: CaseSpec, case_id: str, site: str) -> str:
    sc = spec.scanner
    d = spec.deformation
    px, py, pz = spec.placement
    lines = [
        f"case_id = {case_id}",
        f"site = {site}",
        f"alpha = {sc.alpha!r}",
        f"beta = {sc.beta!r}",
        f"noise_sd = {sc.noise_sd!r}",
        f"kernel_blur_sd = {sc.kernel_blur_sd!r}",
        f"seed = {sc.seed}",
        f"sagitta = {d.sagitta!r}",
        f"axial_tilt = {d.axial_tilt!r}",
        f"placement = {px!r} {py!r} {pz!r}",
    ]
    return "\n".join(lines) + "\n"


def generate_dataset(
    site_specs: list[tuple[str, CaseSpec, int]],
    out_dir: str | Path,
    master_seed: int,
    jitter: JitterSpec = DEFAULT_JITTER,
) -> DatasetManifest:
    """Generate jittered cases for each site and write them plus a manifest.

    Each case gets an HU volume, a ground-truth label map and a parameter
    record; all filenames inside the manifest are relative to ``out_dir`` so
    reruns into fresh directories are byte-identical.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records: list[CaseRecord] = []
    seen: set[str] = set()
    for site, template, count in site_specs:
        for i in range(count):
            case_id = f"{site}{i:03d}"
            if case_id in seen:
                raise ValueError(f"duplicate case id {case_id}")
            seen.add(case_id)
            spec = _jittered(template, site, case_id, master_seed, jitter)
            gt, hu = build_case(spec)
            vol_name = f"{case_id}.mhd"
            lab_name = f"{case_id}_labels.mhd"
            write_volume(hu, out / vol_name)
            write_volume(gt, out / lab_name)
            (out / f"{case_id}.params.txt").write_text(_params_text(spec, case_id, site))
            records.append(
                CaseRecord(
                    case_id=case_id,
                    site=site,
                    volume_path=vol_name,
                    label_path=lab_name,
                    alpha=spec.scanner.alpha,
                    beta=spec.scanner.beta,
                    noise_sd=spec.scanner.noise_sd,
                    sagitta=spec.deformation.sagitta,
                )
            )
    manifest = DatasetManifest(records, out)
    save_manifest(manifest, out / MANIFEST_NAME)
    return manifest


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    lines = [
        "\t".join(
            (
                r.case_id,
                r.site,
                r.volume_path,
                r.label_path,
                repr(r.alpha),
                repr(r.beta),
                repr(r.noise_sd),
                repr(r.sagitta),
            )
        )
        for r in manifest.records
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    records = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 8:
            raise ValueError(f"malformed manifest line: {line!r}")
        records.append(
            CaseRecord(
                case_id=parts[0],
                site=parts[1],
                volume_path=parts[2],
                label_path=parts[3],
                alpha=float(parts[4]),
                beta=float(parts[5]),
                noise_sd=float(parts[6]),
                sagitta=float(parts[7]),
            )
        )
    return DatasetManifest(records, path.parent)


# Site presets mirroring two hospitals with distinct scanner laws: the
# calibration slope 1/alpha differs (0.841 vs 0.744) and the density
# intercepts -beta/alpha differ by 0.6 mg/cm^3.
SITE_PRESETS: dict[str, ScannerModel] = {
    "A": ScannerModel(alpha=1.0 / 0.841, beta=-0.6 / 0.841, noise_sd=5.0, kernel_blur_sd=0.8),
    "B": ScannerModel(alpha=1.0 / 0.744, beta=0.0, noise_sd=5.0, kernel_blur_sd=0.8),
}


def default_grid() -> ImageGrid:
    return ImageGrid(dims=(352, 208, 24), spacing=(0.8, 0.8, 2.5), origin=(0.0, 0.0, 0.0))


def site_template(site: str, grid: ImageGrid | None = None, **scanner_overrides) -> CaseSpec:
    """CaseSpec template for a site preset; unknown sites reuse preset A's law."""
    scanner = SITE_PRESETS.get(site, SITE_PRESETS["A"])
    if scanner_overrides:
        scanner = replace(scanner, **scanner_overrides)
    return CaseSpec(
        grid=grid or default_grid(),
        deformation=DeformationSpec(sagitta=3.0, axial_tilt=0.0),
        scanner=scanner,
    )
