"""Command-line entry point.

Subcommands:
  hslic     stage 1 only: superpixels, plus map-merged superpixels when
            polygons and control points are given
  pipeline  all three stages plus the validity report and a run manifest
  evaluate  score any label map (ours or an external method's) with the
            Dunn / Davies-Bouldin / Silhouette indices

Exit codes: 0 success, 2 input error, 3 numerically degenerate input.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import hsio
from .errors import DegeneracyError, InputError
from .hsio import PipelineConfig
from .pipeline import run_pipeline
from .validity import ValidityReport, evaluate_runs, score_label_map


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _resolve_cube_paths(header, data=None):
    header = Path(header)
    if not header.exists():
        raise InputError(f"cube header {header} does not exist")
    if data is not None:
        data = Path(data)
        if not data.exists():
            raise InputError(f"cube data file {data} does not exist")
        return header, data
    candidates = []
    if header.suffix == ".hdr":
        candidates.append(header.with_suffix(""))
        candidates.append(header.with_suffix(".dat"))
    for cand in candidates:
        if cand.exists():
            return header, cand
    raise InputError(
        f"cannot find the binary next to {header}; pass it with --cube-data")


def _load_config(args) -> PipelineConfig:
    config = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    for name in ("seed", "runs", "min_overlap", "min_segment"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(config, name, value)
    if getattr(args, "exact_metrics", False):
        config.exact_metrics = True
    return config.validate()


def _load_inputs(args, config):
    header, data = _resolve_cube_paths(args.cube, args.cube_data)
    cube = hsio.read_cube(header, data)
    polygons = control_points = None
    if args.polygons and not args.control_points:
        raise InputError("polygons were given without --control-points; "
                         "the map cannot be aligned")
    if args.control_points and not args.polygons:
        raise InputError("control points were given without --polygons; "
                         "there is nothing to align")
    if args.polygons:
        polygons = hsio.read_polygons(args.polygons)
        control_points = hsio.read_control_points(args.control_points)
    inputs = {"cube_header": str(header), "cube_data": str(data)}
    if args.polygons:
        inputs["polygons"] = str(args.polygons)
        inputs["control_points"] = str(args.control_points)
    return cube, polygons, control_points, inputs


def _write_manifest(out_dir: Path, command: str, config: PipelineConfig,
                    inputs: dict, outputs: dict, timings: dict, seed: int):
    manifest = {
        "command": command,
        "config": config.to_dict(),
        "seed": seed,
        "inputs": {k: {"path": v, "sha256": _sha256(v)} for k, v in inputs.items()},
        "outputs": {k: str(v) for k, v in outputs.items()},
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def cmd_hslic(args) -> int:
    config = _load_config(args)
    cube, polygons, control_points, inputs = _load_inputs(args, config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    from .hslic import HslicParams, run_hslic
    from .mapalign import fit_affine, merge_by_polygon, rasterize

    timings, outputs = {}, {}
    t0 = time.perf_counter()
    params = HslicParams.for_image(
        cube.height, cube.width, config.K, config.m, n=config.n,
        max_iters=config.max_iters, residual_tol=config.residual_tol,
        normalize_bands=config.normalize_bands,
        enforce_connectivity=config.enforce_connectivity)
    labels, _ = run_hslic(cube, params, seed=config.seed)
    timings["hslic"] = time.perf_counter() - t0
    hsio.write_label_map(labels, out_dir / "hslic_labels.u32",
                         out_dir / "hslic_labels.png", seed=config.seed)
    outputs["hslic_labels"] = out_dir / "hslic_labels.u32"
    outputs["hslic_render"] = out_dir / "hslic_labels.png"

    if polygons is not None:
        t0 = time.perf_counter()
        transform = fit_affine(control_points)
        mask = rasterize(polygons, transform, cube.height, cube.width)
        merged, tags = merge_by_polygon(labels, mask, config.min_overlap)
        timings["mapalign"] = time.perf_counter() - t0
        hsio.write_label_map(merged, out_dir / "hslic_osm_labels.u32",
                             out_dir / "hslic_osm_labels.png", seed=config.seed)
        (out_dir / "hslic_osm_tags.json").write_text(
            json.dumps({str(k): v for k, v in tags.items()}, indent=2, sort_keys=True) + "\n")
        outputs["hslic_osm_labels"] = out_dir / "hslic_osm_labels.u32"
        outputs["hslic_osm_render"] = out_dir / "hslic_osm_labels.png"
        outputs["hslic_osm_tags"] = out_dir / "hslic_osm_tags.json"

    _write_manifest(out_dir, "hslic", config, inputs, outputs, timings, config.seed)
    print(f"wrote {len(outputs)} artifacts to {out_dir}")
    return 0


def _run_pipeline_to_dir(cube, config, polygons, control_points, inputs,
                         out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = run_pipeline(cube, config, polygons, control_points, seed=config.seed)
    outputs = {}

    hsio.write_label_map(artifacts.hslic_labels, out_dir / "hslic_labels.u32",
                         out_dir / "hslic_labels.png", seed=config.seed)
    outputs["hslic_labels"] = out_dir / "hslic_labels.u32"
    outputs["hslic_render"] = out_dir / "hslic_labels.png"
    if artifacts.merged_labels is not None:
        hsio.write_label_map(artifacts.merged_labels, out_dir / "hslic_osm_labels.u32",
                             out_dir / "hslic_osm_labels.png", seed=config.seed)
        (out_dir / "hslic_osm_tags.json").write_text(
            json.dumps({str(k): v for k, v in artifacts.merged_tags.items()},
                       indent=2, sort_keys=True) + "\n")
        outputs["hslic_osm_labels"] = out_dir / "hslic_osm_labels.u32"
        outputs["hslic_osm_render"] = out_dir / "hslic_osm_labels.png"
        outputs["hslic_osm_tags"] = out_dir / "hslic_osm_tags.json"

    hsio.write_proportions(artifacts.proportions, out_dir / "proportions.hdr",
                           out_dir / "proportions.bin")
    hsio.write_endmembers(artifacts.endmembers, out_dir / "endmembers.csv")
    hsio.write_label_map(artifacts.final_labels, out_dir / "final_labels.u32",
                         out_dir / "final_labels.png", seed=config.seed)
    outputs["proportions_header"] = out_dir / "proportions.hdr"
    outputs["proportions_data"] = out_dir / "proportions.bin"
    outputs["endmembers"] = out_dir / "endmembers.csv"
    outputs["final_labels"] = out_dir / "final_labels.u32"
    outputs["final_render"] = out_dir / "final_labels.png"

    t0 = time.perf_counter()
    features = cube.spectra()
    subsample = cube.n_pixels if config.exact_metrics else config.subsample
    report = evaluate_runs(
        lambda s: run_pipeline(cube, config, polygons, control_points, seed=s).final_labels,
        features, config.runs,
        seeds=[config.seed + i for i in range(config.runs)],
        subsample=subsample, seed=config.seed)
    timings = dict(artifacts.timings)
    timings["validity"] = time.perf_counter() - t0
    report.to_json(out_dir / "validity.json")
    report.to_csv(out_dir / "validity.csv")
    outputs["validity_json"] = out_dir / "validity.json"
    outputs["validity_csv"] = out_dir / "validity.csv"

    _write_manifest(out_dir, "pipeline", config, inputs, outputs, timings, config.seed)
    print(f"final segmentation: {artifacts.final_labels.n_labels} segments; "
          f"dunn={report.dunn_mean:.4g} db={report.db_mean:.4g} "
          f"silhouette={report.silhouette_mean:.4g}")
    return 0


def cmd_pipeline(args) -> int:
    if args.replay:
        manifest = json.loads(Path(args.replay).read_text())
        config = PipelineConfig(**manifest["config"]).validate()
        paths = {k: v["path"] for k, v in manifest["inputs"].items()}
        cube = hsio.read_cube(paths["cube_header"], paths["cube_data"])
        polygons = control_points = None
        if "polygons" in paths:
            polygons = hsio.read_polygons(paths["polygons"])
            control_points = hsio.read_control_points(paths["control_points"])
        inputs = paths
    else:
        if not args.cube:
            raise InputError("--cube is required (or --replay a manifest)")
        config = _load_config(args)
        cube, polygons, control_points, inputs = _load_inputs(args, config)
    return _run_pipeline_to_dir(cube, config, polygons, control_points, inputs,
                                Path(args.out_dir))


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    header, data = _resolve_cube_paths(args.cube, args.cube_data)
    cube = hsio.read_cube(header, data)
    labels = hsio.read_label_map(args.labels, cube.height, cube.width)
    if labels.n_labels < 2:
        raise DegeneracyError("the label map has a single label; indices undefined")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    subsample = cube.n_pixels if config.exact_metrics else config.subsample
    d, b, s = score_label_map(cube.spectra(), labels,
                              subsample=subsample, seed=config.seed)
    report = ValidityReport([d], [b], [s], runs=1, subsample=subsample,
                            seed=config.seed)
    report.to_json(out_dir / "validity.json")
    report.to_csv(out_dir / "validity.csv")
    print(f"dunn={d:.6g} db={b:.6g} silhouette={s:.6g}")
    return 0


def _add_common(sub, cube_required=True):
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--cube", required=cube_required,
                     help="cube header file (binary found next to it or via --cube-data)")
    sub.add_argument("--cube-data", help="explicit cube binary path")
    sub.add_argument("--out-dir", required=True, help="output directory")
    sub.add_argument("--seed", type=int, help="override the config seed")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsseg",
        description="map-guided hyperspectral superpixel segmentation")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("hslic", help="stage 1 superpixels (+ map merge)")
    _add_common(p)
    p.add_argument("--polygons", help="GeoJSON polygon file")
    p.add_argument("--control-points", help="CSV of map<->pixel correspondences")
    p.add_argument("--min-overlap", type=float, help="merge overlap fraction guard")
    p.set_defaults(func=cmd_hslic)

    p = commands.add_parser("pipeline", help="all three stages + validity report")
    _add_common(p, cube_required=False)
    p.add_argument("--polygons", help="GeoJSON polygon file")
    p.add_argument("--control-points", help="CSV of map<->pixel correspondences")
    p.add_argument("--min-overlap", type=float, help="merge overlap fraction guard")
    p.add_argument("--min-segment", type=int, help="cleanup size threshold")
    p.add_argument("--runs", type=int, help="pipeline repetitions for the report")
    p.add_argument("--exact-metrics", action="store_true",
                   help="compute indices on all pixels (no subsampling)")
    p.add_argument("--replay", help="re-run from a manifest.json")
    p.set_defaults(func=cmd_pipeline)

    p = commands.add_parser("evaluate", help="score an existing label map")
    _add_common(p)
    p.add_argument("--labels", required=True, help="raw uint32 label map")
    p.add_argument("--exact-metrics", action="store_true",
                   help="compute indices on all pixels (no subsampling)")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, OSError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return 2
    except DegeneracyError as e:
        print(f"degenerate input: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
