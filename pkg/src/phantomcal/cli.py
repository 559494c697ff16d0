"""Command-line entry point wiring the toolkit into the standard workflows.

Subcommands: gen, segment, calibrate, evaluate, compare. Exit codes:
0 ok, 2 configuration, 3 I/O, 4 segmentation, 5 calibration, 6 grid mismatch.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import calibration as cal
from . import figures, metrics
from . import segmentation as seg
from . import synth
from .volume import GridMismatchError, MetaImageError, read_volume, write_volume

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SEGMENTATION = 4
EXIT_CALIBRATION = 5
EXIT_GRID = 6


class ConfigError(ValueError):
    pass


def _load_config(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for line in p.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line must be 'key = value': {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def _setting(args, config: dict[str, str], name: str, cast, default):
    """Flag value wins over config file, which wins over the default."""
    flag = getattr(args, name, None)
    if flag is not None:
        return flag
    if name in config:
        try:
            return cast(config[name])
        except ValueError as exc:
            raise ConfigError(f"bad config value for {name}: {config[name]!r}") from exc
    return default


def _parse_sites(text: str) -> list[tuple[str, int]]:
    out = []
    for chunk in text.split(","):
        if ":" not in chunk:
            raise ConfigError(f"sites must look like A:10,B:10 — got {chunk!r}")
        site, _, count = chunk.partition(":")
        try:
            out.append((site.strip(), int(count)))
        except ValueError as exc:
            raise ConfigError(f"bad case count in {chunk!r}") from exc
    if not out:
        raise ConfigError("no sites given")
    return out


def _grid_from_config(config: dict[str, str]) -> synth.ImageGrid:
    base = synth.default_grid()
    dims = tuple(
        int(config.get(k, d)) for k, d in zip(("grid_nx", "grid_ny", "grid_nz"), base.dims)
    )
    spacing = tuple(
        float(config.get(k, s))
        for k, s in zip(("spacing_x", "spacing_y", "spacing_z"), base.spacing)
    )
    return synth.ImageGrid(dims, spacing, base.origin)


def _geometry_from_config(config: dict[str, str]) -> synth.PhantomGeometry:
    base = synth.PhantomGeometry()
    kwargs = {}
    for key in ("slab_width", "slab_height", "slab_length", "rod_radius", "rod_pitch"):
        if key in config:
            kwargs[key] = float(config[key])
    return replace(base, **kwargs) if kwargs else base


def _artifacts_from_config(config: dict[str, str]) -> synth.ArtifactSpec:
    streaks = None
    if "metal_streak_amplitude" in config:
        streaks = synth.MetalStreaks(
            count=int(config.get("metal_streak_count", 2)),
            amplitude=float(config["metal_streak_amplitude"]),
            width=float(config.get("metal_streak_width", 4.0)),
            slice_range=(
                int(config.get("metal_streak_z_lo", 0)),
                int(config.get("metal_streak_z_hi", 10**9)),
            ),
        )
    fov = None
    if "partial_fov_fraction" in config:
        fov = synth.PartialFov(float(config["partial_fov_fraction"]))
    halo = None
    if "halation_amplitude" in config:
        halo = synth.HalationPatches(
            count=int(config.get("halation_count", 2)),
            amplitude=float(config["halation_amplitude"]),
            radius=float(config.get("halation_radius", 8.0)),
        )
    return synth.ArtifactSpec(metal_streaks=streaks, partial_fov=fov, halation_patches=halo)


def cmd_gen(args) -> int:
    config = _load_config(args.config)
    if not args.out:
        raise ConfigError("gen requires --out")
    sites = _parse_sites(_setting(args, config, "sites", str, "A:10,B:10"))
    seed = _setting(args, config, "seed", int, 0)
    noise = _setting(args, config, "noise", float, None)
    blur = _setting(args, config, "blur", float, None)
    sagitta = _setting(args, config, "sagitta", float, None)

    grid = _grid_from_config(config)
    geometry = _geometry_from_config(config)
    artifacts = _artifacts_from_config(config)
    jitter = synth.DEFAULT_JITTER
    if "jitter_alpha_rel_sd" in config:
        jitter = replace(jitter, alpha_rel_sd=float(config["jitter_alpha_rel_sd"]))
    if "jitter_sagitta_span" in config:
        jitter = replace(jitter, sagitta_span=float(config["jitter_sagitta_span"]))

    site_specs = []
    for site, count in sites:
        template = synth.site_template(site, grid)
        template.geometry = geometry
        template.artifacts = artifacts
        scanner = template.scanner
        if noise is not None:
            scanner = replace(scanner, noise_sd=noise)
        if blur is not None:
            scanner = replace(scanner, kernel_blur_sd=blur)
        template.scanner = scanner
        if sagitta is not None:
            template.deformation = replace(template.deformation, sagitta=sagitta)
        site_specs.append((site, template, count))

    manifest = synth.generate_dataset(site_specs, args.out, seed, jitter)
    manifest_path = Path(args.out) / synth.MANIFEST_NAME
    _say(args, f"wrote {len(manifest.records)} cases")
    print(manifest_path)
    return EXIT_OK


def _detector_from_config(config: dict[str, str]) -> seg.DetectorParams:
    geometry = _geometry_from_config(config)
    kwargs = {}
    if "base_hu_lo" in config or "base_hu_hi" in config:
        kwargs["base_hu_window"] = (
            float(config.get("base_hu_lo", -500.0)),
            float(config.get("base_hu_hi", 25.0)),
        )
    if "rod_hu_margin" in config:
        kwargs["rod_hu_margin"] = float(config["rod_hu_margin"])
    if "search_region" in config:
        kwargs["search_region"] = float(config["search_region"])
    if "min_component_voxels" in config:
        kwargs["min_component_voxels"] = int(config["min_component_voxels"])
    return seg.DetectorParams(geometry=geometry, **kwargs)


def _pred_path(volume_path: Path) -> Path:
    return volume_path.with_name(volume_path.stem + "_pred.mhd")


def _segment_one(volume_path: Path, args, params, mask_path: Path | None) -> Path:
    vol = read_volume(volume_path)
    if args.backend == "mask":
        if mask_path is None:
            raise ConfigError("--backend mask requires --mask")
        labels = seg.import_mask(mask_path, vol.grid)
    else:
        labels = seg.segment_classical(vol, params)
    out_path = _pred_path(volume_path)
    write_volume(labels, out_path)
    return out_path


def cmd_segment(args) -> int:
    config = _load_config(args.config)
    params = _detector_from_config(config)
    if args.manifest:
        manifest = synth.load_manifest(args.manifest)
        failures = []
        for record in sorted(manifest.records, key=lambda r: r.case_id):
            volume_path = manifest.resolve(record.volume_path)
            try:
                out = _segment_one(volume_path, args, params, None)
                _say(args, f"{record.case_id}: ok -> {out.name}")
            except (seg.PhantomNotFoundError, seg.AmbiguousRodAssignmentError) as exc:
                failures.append(record.case_id)
                _say(args, f"{record.case_id}: FAILED ({exc})")
        if failures:
            _say(args, f"segmentation failed for {len(failures)} case(s): {' '.join(failures)}")
            return EXIT_SEGMENTATION
        return EXIT_OK
    if not args.volume:
        raise ConfigError("segment requires --volume or --manifest")
    mask = Path(args.mask) if args.mask else None
    out = _segment_one(Path(args.volume), args, params, mask)
    _say(args, f"wrote {out}")
    return EXIT_OK


def _calibrate_one(volume_path: Path, labels_path: Path, out_dir: Path, args, config) -> cal.CalibrationModel:
    erode_radius = _setting(args, config, "erode", int, 3)
    statistic = _setting(args, config, "stat", str, "mean")
    vol = read_volume(volume_path)
    labels = read_volume(labels_path)
    if not isinstance(labels, seg.LabelMap):
        raise ConfigError(f"{labels_path} is not a label map")
    eroded = seg.erode_labels(labels, erode_radius)
    stats = cal.region_statistics(vol, eroded)
    case_id = volume_path.stem
    model = cal.fit_calibration(stats, statistic=statistic, case_id=case_id)
    out_dir.mkdir(parents=True, exist_ok=True)
    cal.save_model(model, out_dir / f"{case_id}.model.txt")
    with open(out_dir / f"{case_id}.regression.csv", "w", newline="") as fh:
        fh.write("hu,density,residual\n")
        for (hu, d), res in zip(model.points, model.residuals):
            fh.write(f"{hu:.6f},{d:.1f},{res:.6f}\n")
    figures.write_regression_svg(model, out_dir / f"{case_id}.svg")
    print(f"{case_id}: slope = {model.slope:.6f}, intercept = {model.intercept:.4f}, r = {model.r:.8f}")
    return model


def cmd_calibrate(args) -> int:
    config = _load_config(args.config)
    out_dir = Path(args.out) if args.out else None
    if args.manifest:
        if out_dir is None:
            raise ConfigError("calibrate --manifest requires --out")
        manifest = synth.load_manifest(args.manifest)
        labels_source = _setting(args, config, "labels_from", str, "pred")
        for record in sorted(manifest.records, key=lambda r: r.case_id):
            volume_path = manifest.resolve(record.volume_path)
            if labels_source == "truth":
                labels_path = manifest.resolve(record.label_path)
            else:
                labels_path = _pred_path(volume_path)
                if not labels_path.exists():
                    raise ConfigError(f"no predicted labels for {record.case_id}; run segment first")
            _calibrate_one(volume_path, labels_path, out_dir / record.site, args, config)
        return EXIT_OK
    if not args.volume or not args.labels:
        raise ConfigError("calibrate requires --volume and --labels (or --manifest)")
    if out_dir is None:
        out_dir = Path(args.volume).parent
    _calibrate_one(Path(args.volume), Path(args.labels), out_dir, args, config)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _load_config(args.config)
    erode_radius = _setting(args, config, "erode", int, 3)
    out_dir = Path(args.out) if args.out else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)

    reports: list[metrics.MetricsReport] = []
    if args.manifest:
        manifest = synth.load_manifest(args.manifest)
        for record in sorted(manifest.records, key=lambda r: r.case_id):
            volume_path = manifest.resolve(record.volume_path)
            pred_path = _pred_path(volume_path)
            if not pred_path.exists():
                raise ConfigError(f"no predicted labels for {record.case_id}; run segment first")
            vol = read_volume(volume_path)
            ref = read_volume(manifest.resolve(record.label_path))
            pred = read_volume(pred_path)
            report = metrics.case_metrics(vol, ref, pred, hu_erode_radius=erode_radius)
            report.case_id = record.case_id
            report.site = record.site
            reports.append(report)
            _say(args, f"{record.case_id}: pooled dice {report.pooled_dice:.4f}")
    else:
        if not (args.volume and args.ref and args.pred):
            raise ConfigError("evaluate requires --volume, --ref and --pred (or --manifest)")
        vol = read_volume(args.volume)
        ref = read_volume(args.ref)
        pred = read_volume(args.pred)
        report = metrics.case_metrics(vol, ref, pred, hu_erode_radius=erode_radius)
        report.case_id = Path(args.volume).stem
        reports.append(report)

    metrics.write_case_metrics_csv(reports, out_dir / "metrics.csv")
    summary = metrics.aggregate_report(reports)
    metrics.write_summary_csv(summary, out_dir / "summary.csv")

    if args.crossval:
        if not args.manifest:
            raise ConfigError("--crossval needs --manifest")
        seed = _setting(args, config, "seed", int, 0)
        by_site: dict[str, list[str]] = {}
        for record in manifest.records:
            by_site.setdefault(record.site, []).append(record.case_id)
        plan = metrics.crossval_split(by_site, args.crossval, seed)
        metrics.save_fold_plan(plan, out_dir / "folds.tsv")
        report_by_id = {r.case_id: r for r in reports}
        with open(out_dir / "fold_summary.csv", "w", newline="") as fh:
            fh.write("fold,metric,scope,median,iqr\n")
            for f, (_, val) in enumerate(plan.folds):
                fold_summary = metrics.aggregate_report([report_by_id[c] for c in val])
                for metric, scope, med, iqr in fold_summary.rows:
                    fh.write(f"{f},{metric},{scope},{med:.6f},{iqr:.6f}\n")
    _say(args, f"wrote {out_dir / 'metrics.csv'} and {out_dir / 'summary.csv'}")
    return EXIT_OK


def _parse_range(text: str) -> tuple[int, int]:
    try:
        lo_s, _, hi_s = text.partition(":")
        lo, hi = int(lo_s), int(hi_s)
    except ValueError as exc:
        raise ConfigError(f"range must look like -100:700, got {text!r}") from exc
    if lo > hi:
        raise ConfigError(f"invalid range: {lo} > {hi}")
    return lo, hi


def _load_site_models(directory: Path) -> list[cal.CalibrationModel]:
    if not directory.is_dir():
        raise ConfigError(f"site directory not found: {directory}")
    paths = sorted(directory.glob("*.model.txt"))
    if not paths:
        raise ConfigError(f"no model records in {directory}")
    return [cal.load_model(p) for p in paths]


def cmd_compare(args) -> int:
    config = _load_config(args.config)
    lo, hi = _parse_range(_setting(args, config, "range", str, "-100:700"))
    alpha = _setting(args, config, "alpha", float, 0.05)
    out_dir = Path(args.out) if args.out else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)

    models_a = _load_site_models(Path(args.site_a))
    models_b = _load_site_models(Path(args.site_b))
    cmp = cal.compare_models(models_a, models_b, lo, hi, alpha)

    cal.write_comparison_csv(cmp, out_dir / "comparison.csv")
    figures.write_comparison_svg(cmp, out_dir / "comparison.svg")
    with open(out_dir / "comparison_summary.txt", "w") as fh:
        fh.write("hu\tmedian_a\tmedian_b\tdiff\n")
        for h, a, b, d in cmp.summary:
            fh.write(f"{h}\t{a:.3f}\t{b:.3f}\t{d:.3f}\n")

    for h, a, b, d in cmp.summary:
        print(f"{h} HU: A = {a:.1f}, B = {b:.1f}, diff = {d:.1f} mg/cm^3")
    ranges = cmp.significant_ranges()
    if ranges:
        spans = ", ".join(f"[{a}, {b}]" for a, b in ranges)
        print(f"significant HU ranges (BH-adjusted p < {alpha:g}): {spans}")
    else:
        print("no significant HU values")
    return EXIT_OK


def _say(args, message: str) -> None:
    if not getattr(args, "quiet", False):
        print(message)


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="plain-text 'key = value' configuration file")
    sub.add_argument("--seed", type=int, default=None, help="master seed")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--quiet", action="store_true", help="suppress progress chatter")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phantomcal",
                                     description="calibration phantom segmentation and density calibration")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--sites", default=None, help="per-site case counts, e.g. A:20,B:20")
    p.add_argument("--noise", type=float, default=None, help="noise sd in HU")
    p.add_argument("--blur", type=float, default=None, help="kernel blur sd in mm")
    p.add_argument("--sagitta", type=float, default=None, help="slab bow in mm")
    p.set_defaults(func=cmd_gen)

    p = subs.add_parser("segment", help="segment phantom regions")
    _add_common(p)
    p.add_argument("--volume", default=None, help="single HU volume (.mhd)")
    p.add_argument("--manifest", default=None, help="dataset manifest for batch mode")
    p.add_argument("--backend", choices=("classical", "mask"), default="classical")
    p.add_argument("--mask", default=None, help="label map to import when --backend mask")
    p.set_defaults(func=cmd_segment)

    p = subs.add_parser("calibrate", help="fit the HU-to-density regression")
    _add_common(p)
    p.add_argument("--volume", default=None)
    p.add_argument("--labels", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--erode", type=int, default=None, help="erosion radius in pixels (default 3)")
    p.add_argument("--stat", choices=("mean", "median"), default=None)
    p.add_argument("--labels-from", dest="labels_from", choices=("pred", "truth"), default=None)
    p.set_defaults(func=cmd_calibrate)

    p = subs.add_parser("evaluate", help="score predicted label maps")
    _add_common(p)
    p.add_argument("--volume", default=None)
    p.add_argument("--ref", default=None)
    p.add_argument("--pred", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--erode", type=int, default=None)
    p.add_argument("--crossval", type=int, default=None, help="fold count")
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("compare", help="compare calibration models across sites")
    _add_common(p)
    p.add_argument("--site-a", dest="site_a", required=True)
    p.add_argument("--site-b", dest="site_b", required=True)
    p.add_argument("--range", default=None, help="HU range lo:hi (default -100:700)")
    p.add_argument("--alpha", type=float, default=None, help="significance level")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, GridMismatchError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_GRID
        if isinstance(exc, MetaImageError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (seg.PhantomNotFoundError, seg.AmbiguousRodAssignmentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SEGMENTATION
    except (cal.RegionVanishedError, cal.DegenerateFitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
