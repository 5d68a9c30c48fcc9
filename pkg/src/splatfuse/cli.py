"""Command-line pipeline: register, fuse, eval-images, eval-cloud, render,
convert.

Exit codes: 0 success, 1 error (machine-readable JSON on stderr),
2 completed without convergence (outputs still written). Every command
writes a manifest with content hashes of its inputs and outputs; a command
refuses to overwrite a manifest recording different inputs unless --force
is given. Runs are deterministic: manifests contain no timestamps, and the
--threads / --deterministic execution flags never change any output byte.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

from . import __version__
from .cloud import PointCloud
from .colmap import read_colmap_model
from .config import config_json_dict, load_config, parse_background
from .errors import ColorlessCloudError, ConfigError, MissingInputError, SplatFuseError
from .fusion import FusionConfig, export_colmap_points, fuse_prior, seed_splats_from_points
from .gaussians import SplatCloud, splat_cloud_to_points
from .manifest import build_manifest, check_manifest_overwrite, dump_json, hash_paths
from .metrics import (
    ImageMetricReport,
    cloud_color_l1_hungarian,
    cloud_color_l1_nn,
)
from .ply import parse_ply_header, read_ply, write_ply
from .registration import (
    IcpParams,
    RegistrationParams,
    filter_sfm_outliers,
    read_correspondence_file,
    register_pipeline,
)
from .render import Camera, load_image, render, save_image
from .splat_io import read_splat_ply, write_splat_ply
from .transforms import Sim3Transform

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2


def _require_file(path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"{what} not found: {path}")
    return path


def _emit_error(exc: Exception) -> None:
    kind = getattr(exc, "kind", "error")
    payload = {"schema": 1, "error": {"kind": kind, "message": str(exc)}}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def _load_transform(path) -> Sim3Transform:
    data = json.loads(_require_file(path, "transform file").read_text())
    if "transform" in data:  # allow passing a register report.json
        data = data["transform"]
    return Sim3Transform.from_json_dict(data)


def _is_splat_ply(path) -> bool:
    with open(path, "rb") as fh:
        header = parse_ply_header(fh)
    names = {p.name for e in header.elements for p in e.properties}
    return "f_dc_0" in names


def _load_points_for_metric(path) -> PointCloud:
    """A colored point cloud from either a plain PLY or a splat PLY.

    Splats contribute their means with band-0 colors at the canonical view.
    """
    path = _require_file(path, "point cloud")
    if _is_splat_ply(path):
        return splat_cloud_to_points(SplatCloud.from_file(read_splat_ply(path)))
    return read_ply(path)


def _config_from_args(args) -> dict:
    overrides = {
        key: getattr(args, attr)
        for key, attr in getattr(args, "_config_flags", {}).items()
        if getattr(args, attr, None) is not None
    }
    return load_config(args.config, overrides)


# ---------------------------------------------------------------------------
# register


def cmd_register(args) -> int:
    config = _config_from_args(args)
    lidar_path = _require_file(args.lidar, "LiDAR PLY")
    colmap_dir = _require_file(args.colmap_dir, "COLMAP model directory")
    corr_path = _require_file(args.correspondences, "correspondence file")

    lidar = read_ply(lidar_path)
    model = read_colmap_model(colmap_dir)
    sfm_points = filter_sfm_outliers(
        model.points,
        model.reproj_errors,
        error_percentile=config["registration.reproj_error_percentile"],
    )
    corr = read_correspondence_file(corr_path)
    params = RegistrationParams(
        scale_percentile=config["registration.scale_percentile"],
        scale_method=config["registration.scale_method"],
        icp=IcpParams(
            max_iterations=config["registration.max_iterations"],
            rel_tolerance=config["registration.rel_tolerance"],
            keep_fraction=config["registration.trim_keep_fraction"],
            max_correspondence_distance=config[
                "registration.max_correspondence_distance"
            ],
        ),
    )
    transform, report = register_pipeline(lidar, sfm_points, corr, params)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs = {
        "lidar": lidar_path,
        "correspondences": corr_path,
        **{
            f"colmap/{p.name}": p
            for p in sorted(colmap_dir.iterdir())
            if p.suffix in (".bin", ".txt")
        },
    }
    check_manifest_overwrite(out_dir / "manifest.json", hash_paths(inputs), args.force)

    transform_path = out_dir / "transform.json"
    report_path = out_dir / "report.json"
    dump_json(transform.to_json_dict(), transform_path)
    dump_json(report.to_json_dict(), report_path)
    manifest = build_manifest(
        "register",
        config_json_dict(config, ("registration.",)),
        inputs,
        {"transform.json": transform_path, "report.json": report_path},
        extra={"converged": report.icp.converged, "iterations": report.icp.iterations},
    )
    dump_json(manifest, out_dir / "manifest.json")
    return EXIT_OK if report.icp.converged else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------------------
# fuse


def cmd_fuse(args) -> int:
    config = _config_from_args(args)
    lidar_path = _require_file(args.lidar, "LiDAR PLY")
    transform = _load_transform(args.transform)
    lidar = read_ply(lidar_path)
    if lidar.default_colors:
        raise ColorlessCloudError(f"{lidar_path} carries no color data")

    fusion_config = FusionConfig(
        voxel_edge_m=config["fusion.voxel_edge_m"],
        point_cap=config["fusion.point_cap"],
        initial_opacity=config["fusion.initial_opacity"],
    )
    prior_cloud, seed_splats = fuse_prior(lidar, transform, fusion_config)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs = {"lidar": lidar_path, "transform": Path(args.transform)}
    if args.colmap_dir is not None:
        colmap_dir = _require_file(args.colmap_dir, "COLMAP model directory")
        for p in sorted(colmap_dir.iterdir()):
            if p.stem in ("cameras", "images") and p.suffix in (".bin", ".txt"):
                inputs[f"colmap/{p.name}"] = p
    check_manifest_overwrite(out_dir / "manifest.json", hash_paths(inputs), args.force)

    init_path = out_dir / "init.ply"
    splat_path = out_dir / "seed_splats.ply"
    sparse_dir = out_dir / "sparse"
    write_ply(prior_cloud, init_path)
    write_splat_ply(seed_splats, splat_path)
    export_colmap_points(prior_cloud, sparse_dir)
    outputs = {
        "init.ply": init_path,
        "seed_splats.ply": splat_path,
        "sparse/points3D.bin": sparse_dir / "points3D.bin",
    }
    if args.colmap_dir is not None:
        for name, p in list(inputs.items()):
            if name.startswith("colmap/"):
                dest = sparse_dir / p.name
                shutil.copyfile(p, dest)
                outputs[f"sparse/{p.name}"] = dest

    manifest = build_manifest(
        "fuse",
        config_json_dict(config, ("fusion.",)),
        inputs,
        outputs,
        extra={
            "input_points": len(lidar),
            "prior_points": len(prior_cloud),
            "transform": transform.to_json_dict(),
        },
    )
    dump_json(manifest, out_dir / "manifest.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval-images


def cmd_eval_images(args) -> int:
    pred_dir = _require_file(args.pred_dir, "prediction directory")
    gt_dir = _require_file(args.gt_dir, "ground-truth directory")
    extensions = (".png", ".npy")
    pred_names = {p.name for p in pred_dir.iterdir() if p.suffix in extensions}
    gt_names = {p.name for p in gt_dir.iterdir() if p.suffix in extensions}
    missing = sorted(gt_names - pred_names)
    extra = sorted(pred_names - gt_names)
    matched = sorted(gt_names & pred_names)

    report = ImageMetricReport()
    for name in matched:
        report.add(name, load_image(pred_dir / name), load_image(gt_dir / name))
    payload = report.to_json_dict()
    payload["unmatched"] = {"missing_predictions": missing, "extra_predictions": extra}

    out_path = Path(args.out) if args.out else None
    if out_path:
        dump_json(payload, out_path)
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    if args.csv:
        report.write_csv(args.csv)

    if missing or extra:
        _emit_error(MissingInputError(f"unmatched image files: {missing + extra}"))
        return EXIT_ERROR
    if not matched:
        _emit_error(MissingInputError("no image pairs to compare"))
        return EXIT_ERROR
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval-cloud


def cmd_eval_cloud(args) -> int:
    config = _config_from_args(args)
    pred = _load_points_for_metric(args.pred)
    gt = _load_points_for_metric(args.gt)
    if args.mode == "nn":
        report = cloud_color_l1_nn(
            pred, gt, max_dist=config["metrics.max_match_distance"]
        )
    else:
        report = cloud_color_l1_hungarian(
            pred, gt, size_cap=config["metrics.hungarian_cap"]
        )
    payload = report.to_json_dict()
    if args.out:
        dump_json(payload, Path(args.out))
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# render


def cmd_render(args) -> int:
    config = _config_from_args(args)
    splat_path = _require_file(args.splats, "splat PLY")
    colmap_dir = _require_file(args.colmap_dir, "COLMAP model directory")
    splats = SplatCloud.from_file(read_splat_ply(splat_path))
    model = read_colmap_model(colmap_dir)
    image_ids = [int(v) for v in args.image_ids.split(",") if v.strip()]
    if not image_ids:
        raise ConfigError("no image ids requested")
    background = parse_background(config["render.background"])

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs = {
        "splats": splat_path,
        **{
            f"colmap/{p.name}": p
            for p in sorted(colmap_dir.iterdir())
            if p.suffix in (".bin", ".txt")
        },
    }
    check_manifest_overwrite(out_dir / "manifest.json", hash_paths(inputs), args.force)

    outputs = {}
    for image_id in image_ids:
        camera = Camera.from_sfm(model, image_id)
        image = render(splats, camera, background=background, z_near=config["render.z_near"])
        name = f"render_{image_id:06d}.{args.image_format}"
        save_image(image, out_dir / name)
        outputs[name] = out_dir / name

    manifest = build_manifest(
        "render",
        config_json_dict(config, ("render.",)),
        inputs,
        outputs,
        extra={"image_ids": image_ids, "splats": len(splats)},
    )
    dump_json(manifest, out_dir / "manifest.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# convert


def cmd_convert(args) -> int:
    config = _config_from_args(args)
    in_path = _require_file(args.input, "input PLY")
    out_path = Path(args.output)
    if _is_splat_ply(in_path):
        cloud = splat_cloud_to_points(SplatCloud.from_file(read_splat_ply(in_path)))
        write_ply(cloud, out_path)
    else:
        cloud = read_ply(in_path)
        splats = seed_splats_from_points(
            cloud, opacity=config["fusion.initial_opacity"]
        )
        write_splat_ply(splats, out_path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", default=None, help="key = value config file")
    parser.add_argument("--force", action="store_true",
                        help="overwrite a manifest recording different inputs")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap (results never depend on it)")
    parser.add_argument("--deterministic", action="store_true",
                        help="force sequential reductions (always on in practice)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splatfuse",
        description="Register LiDAR clouds to SfM frames, build splat priors, "
        "render, and evaluate.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="estimate the LiDAR -> SfM transform")
    _add_common(p)
    p.add_argument("--lidar", required=True)
    p.add_argument("--colmap-dir", required=True)
    p.add_argument("--correspondences", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--scale-percentile", type=float)
    p.add_argument("--scale-method", choices=("percentile", "max"))
    p.add_argument("--trim-keep", type=float)
    p.add_argument("--icp-max-iterations", type=int)
    p.add_argument("--icp-rel-tolerance", type=float)
    p.add_argument("--max-corr-distance", type=float)
    p.add_argument("--reproj-percentile", type=float)
    p.set_defaults(
        func=cmd_register,
        _config_flags={
            "registration.scale_percentile": "scale_percentile",
            "registration.scale_method": "scale_method",
            "registration.trim_keep_fraction": "trim_keep",
            "registration.max_iterations": "icp_max_iterations",
            "registration.rel_tolerance": "icp_rel_tolerance",
            "registration.max_correspondence_distance": "max_corr_distance",
            "registration.reproj_error_percentile": "reproj_percentile",
        },
    )

    p = sub.add_parser("fuse", help="build the splat initialization prior")
    _add_common(p)
    p.add_argument("--lidar", required=True)
    p.add_argument("--transform", required=True)
    p.add_argument("--colmap-dir", default=None,
                   help="copy cameras/images through to the output sparse model")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--voxel-edge-m", type=float)
    p.add_argument("--point-cap", type=int)
    p.add_argument("--opacity", type=float)
    p.set_defaults(
        func=cmd_fuse,
        _config_flags={
            "fusion.voxel_edge_m": "voxel_edge_m",
            "fusion.point_cap": "point_cap",
            "fusion.initial_opacity": "opacity",
        },
    )

    p = sub.add_parser("eval-images", help="L1/PSNR over matching image pairs")
    _add_common(p)
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--out", default=None, help="report JSON path (default stdout)")
    p.add_argument("--csv", default=None, help="also write a CSV summary")
    p.set_defaults(func=cmd_eval_images, _config_flags={})

    p = sub.add_parser("eval-cloud", help="color L1 between matched point clouds")
    _add_common(p)
    p.add_argument("--pred", required=True, help="point PLY or splat PLY")
    p.add_argument("--gt", required=True)
    p.add_argument("--mode", choices=("nn", "hungarian"), default="nn")
    p.add_argument("--max-dist", type=float)
    p.add_argument("--hungarian-cap", type=int)
    p.add_argument("--out", default=None)
    p.set_defaults(
        func=cmd_eval_cloud,
        _config_flags={
            "metrics.max_match_distance": "max_dist",
            "metrics.hungarian_cap": "hungarian_cap",
        },
    )

    p = sub.add_parser("render", help="render splats from calibrated views")
    _add_common(p)
    p.add_argument("--splats", required=True)
    p.add_argument("--colmap-dir", required=True)
    p.add_argument("--image-ids", required=True, help="comma-separated image ids")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--image-format", choices=("png", "npy"), default="png")
    p.add_argument("--background")
    p.add_argument("--z-near", type=float)
    p.set_defaults(
        func=cmd_render,
        _config_flags={"render.background": "background", "render.z_near": "z_near"},
    )

    p = sub.add_parser("convert", help="splat PLY -> colored PLY, or PLY -> seed splats")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--opacity", type=float)
    p.set_defaults(func=cmd_convert, _config_flags={"fusion.initial_opacity": "opacity"})

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SplatFuseError as exc:
        _emit_error(exc)
        return EXIT_ERROR
    except OSError as exc:
        _emit_error(exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
