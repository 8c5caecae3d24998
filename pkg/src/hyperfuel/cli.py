"""``hyperfuel`` command line.

Exit codes: 0 success, 1 validation failure, 2 stage failure, 3 I/O failure.
The per-stage subcommands write exactly the files ``hyperfuel run`` writes
for the same stage, so chaining them reproduces a full run.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .calibration import load_signals
from .datacube import load_cube, read_header, save_cube
from .fusion import DEFAULT_VOXEL, POSE_MAX_SKEW, accumulate, read_fused_ply, read_trajectory, write_fused_ply
from .geometry import load_calibration
from .kernels import BACKEND
from .mosaic import load_layout
from .pipeline import (
    EXIT_IO,
    EXIT_OK,
    EXIT_STAGE,
    EXIT_VALIDATION,
    STAGES,
    ManifestError,
    StageError,
    format_reports,
    load_manifest,
    run_pipeline,
    stage_calibrate,
    stage_classify,
    stage_colorize,
    stage_demosaic,
    stage_index,
    stage_register,
    validate_manifest,
)
from .registration import save_registered
from .spectral import BandSelection, IndexKind, load_index, load_risk, save_index, save_index_png, save_risk
from .synth import SyntheticScene, render_session

log = logging.getLogger("hyperfuel")


def _timestamp(header: dict, override: float | None) -> float | None:
    if override is not None:
        return override
    ts = header.get("timestamp", "none")
    return None if ts == "none" else float(ts)


# ---------------------------------------------------------------- commands

def cmd_run(args) -> int:
    manifest = load_manifest(args.manifest)
    stages = None if args.stages is None else [s.strip() for s in args.stages.split(",") if s.strip()]
    bad = sorted(set(stages or ()) - set(STAGES))
    if bad:
        log.error("unknown stage(s): %s (choose from %s)", ", ".join(bad), ", ".join(STAGES))
        return EXIT_VALIDATION
    reports = run_pipeline(manifest, args.out, stages=stages, workers=args.workers,
                           persist_intermediates=not args.no_intermediates,
                           voxel=args.voxel or None, binary_ply=not args.ascii_ply)
    text = format_reports(reports)
    print(text)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_validate(args) -> int:
    findings = validate_manifest(load_manifest(args.manifest))
    for f in findings:
        print(f)
    if findings:
        return EXIT_VALIDATION
    print("manifest ok")
    return EXIT_OK


def cmd_synth(args) -> int:
    scene = SyntheticScene(field=args.scene, constant=args.constant, depth=args.depth,
                           noise=args.noise, seed=args.seed)
    drop = tuple(int(x) for x in args.drop_swir.split(",")) if args.drop_swir else ()
    path = render_session(scene, args.frames, args.out, dims=(args.width, args.height),
                          registration=args.registration, drop_swir=drop, binary_ply=not args.ascii_ply)
    print(path)
    return EXIT_OK


def cmd_demosaic(args) -> int:
    header = read_header(args.frame)
    cube = stage_demosaic(Path(args.frame), load_layout(args.layout), args.frame_id,
                          _timestamp(header, args.timestamp))
    save_cube(cube, args.out)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cube = load_cube(args.cube)
    if args.frame_id is not None:
        cube = cube.replace(frame_id=args.frame_id)
    signals = [load_signals(p) for p in args.signals]
    save_cube(stage_calibrate(cube, signals), args.out)
    return EXIT_OK


def cmd_register(args) -> int:
    reg = stage_register(load_cube(args.rgb), load_cube(args.vnir), load_cube(args.swir),
                         load_calibration(args.calibration))
    save_registered(reg, args.out)
    return EXIT_OK


def cmd_index(args) -> int:
    sel = BandSelection.from_dict(json.loads(args.bands) if args.bands else None)
    indices = stage_index(load_cube(args.cube), sel)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kinds = list(IndexKind) if args.all else [IndexKind.MOISTURE]
    for kind in kinds:
        save_index(indices[kind], out / kind.value)
    save_index_png(indices[IndexKind.MOISTURE], out / "moisture.png")
    return EXIT_OK


def cmd_classify(args) -> int:
    save_risk(stage_classify(load_index(args.moisture)), args.out)
    return EXIT_OK


def cmd_fuse(args) -> int:
    crop = json.loads(Path(args.crop).read_text(encoding="utf-8"))
    fused = stage_colorize(Path(args.cloud), args.timestamp, load_index(args.moisture),
                           load_risk(args.risk), (crop["x0"], crop["y0"], crop["width"], crop["height"]),
                           load_calibration(args.calibration))
    write_fused_ply(fused, args.out, binary=not args.ascii_ply)
    return EXIT_OK


def cmd_accumulate(args) -> int:
    clouds = [read_fused_ply(p) for p in args.clouds]
    merged, dropped = accumulate(clouds, read_trajectory(args.poses), args.max_skew, args.voxel or None)
    write_fused_ply(merged, args.out, binary=not args.ascii_ply)
    if dropped:
        log.warning("%d cloud(s) had no pose within %.3f s", dropped, args.max_skew)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hyperfuel",
                                description="Hyperspectral + LiDAR fuel-moisture processing.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND} kernels)")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("run", help="run the pipeline over a session manifest")
    s.add_argument("--manifest", required=True, help="session manifest (JSON)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--stages", help=f"comma-separated subset of: {','.join(STAGES)}")
    s.add_argument("--workers", type=int, default=1, help="frames processed concurrently (default 1)")
    s.add_argument("--no-intermediates", action="store_true",
                   help="only write moisture, risk, fused clouds, map and stats")
    s.add_argument("--voxel", type=float, default=DEFAULT_VOXEL,
                   help=f"map voxel edge in metres, 0 disables (default {DEFAULT_VOXEL})")
    s.add_argument("--ascii-ply", action="store_true", help="write ASCII instead of binary PLY")
    s.add_argument("--report", help="also write the stage reports (with timings) to this file")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("validate", help="check a manifest and list every problem found")
    s.add_argument("--manifest", required=True, help="session manifest (JSON)")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("synth", help="render a synthetic session with ground truth")
    s.add_argument("--scene", choices=("ramp", "constant", "checker"), default="ramp",
                   help="moisture field painted on the wall")
    s.add_argument("--frames", type=int, default=3, help="number of frames (default 3)")
    s.add_argument("--out", required=True, help="session directory to create")
    s.add_argument("--width", type=int, default=816, help="RGB width in pixels")
    s.add_argument("--height", type=int, default=684, help="RGB height in pixels")
    s.add_argument("--registration", choices=("identity", "translation", "affine"), default="affine",
                   help="homographies relating the hyperspectral sensors to RGB")
    s.add_argument("--constant", type=float, default=0.6, help="moisture of the constant scene")
    s.add_argument("--depth", type=float, default=5.0, help="wall distance in metres")
    s.add_argument("--noise", type=float, default=0.0, help="reflectance noise sigma")
    s.add_argument("--seed", type=int, default=0, help="noise seed")
    s.add_argument("--drop-swir", help="comma-separated frame indices rendered without SWIR")
    s.add_argument("--ascii-ply", action="store_true", help="write ASCII instead of binary PLY")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("demosaic", help="split a mosaic frame into a raw cube")
    s.add_argument("--frame", required=True, help="mosaic frame header")
    s.add_argument("--layout", required=True, help="mosaic layout (JSON)")
    s.add_argument("--frame-id", default="", help="frame id stored in the cube")
    s.add_argument("--timestamp", type=float, help="override the frame timestamp")
    s.add_argument("--out", required=True, help="output cube path stem")
    s.set_defaults(func=cmd_demosaic)

    s = sub.add_parser("calibrate", help="convert a raw cube to reflectance")
    s.add_argument("--cube", required=True, help="raw cube header")
    s.add_argument("--signals", required=True, nargs="+",
                   help="dark/reference signal files; the one nearest in time is used")
    s.add_argument("--frame-id", help="replace the frame id stored in the cube")
    s.add_argument("--out", required=True, help="output cube path stem")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("register", help="warp VNIR and SWIR onto RGB and crop")
    s.add_argument("--rgb", required=True, help="RGB reflectance cube")
    s.add_argument("--vnir", required=True, help="VNIR reflectance cube")
    s.add_argument("--swir", required=True, help="SWIR reflectance cube")
    s.add_argument("--calibration", required=True, help="sensor calibration (JSON)")
    s.add_argument("--out", required=True, help="output path stem (cube, .mask, .crop.json)")
    s.set_defaults(func=cmd_register)

    s = sub.add_parser("index", help="compute moisture (and other) indices")
    s.add_argument("--cube", required=True, help="registered reflectance cube")
    s.add_argument("--out-dir", required=True, help="directory for index planes and moisture.png")
    s.add_argument("--bands", help="JSON object overriding band centers, e.g. '{\"nir\": 850}'")
    s.add_argument("--all", action="store_true", help="also write ndwi, ndvi and ndmi")
    s.set_defaults(func=cmd_index)

    s = sub.add_parser("classify", help="classify a moisture map into risk classes")
    s.add_argument("--moisture", required=True, help="moisture index plane")
    s.add_argument("--out", required=True, help="output stem (.hdr/.bin, .png, .counts.json)")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("fuse", help="colorize one LiDAR cloud with moisture and risk")
    s.add_argument("--cloud", required=True, help="LiDAR cloud (PLY)")
    s.add_argument("--moisture", required=True, help="moisture index plane")
    s.add_argument("--risk", required=True, help="risk class plane stem")
    s.add_argument("--crop", required=True, help="crop rectangle JSON written by register")
    s.add_argument("--calibration", required=True, help="sensor calibration (JSON)")
    s.add_argument("--timestamp", type=float, help="cloud timestamp (default: PLY comment)")
    s.add_argument("--ascii-ply", action="store_true", help="write ASCII instead of binary PLY")
    s.add_argument("--out", required=True, help="output fused PLY")
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("accumulate", help="merge fused clouds into one world-frame map")
    s.add_argument("--clouds", required=True, nargs="+", help="fused PLY files")
    s.add_argument("--poses", required=True, help="trajectory (timestamp tx ty tz qx qy qz qw)")
    s.add_argument("--voxel", type=float, default=DEFAULT_VOXEL,
                   help=f"voxel edge in metres, 0 disables (default {DEFAULT_VOXEL})")
    s.add_argument("--max-skew", type=float, default=POSE_MAX_SKEW, help="pose time tolerance in seconds")
    s.add_argument("--ascii-ply", action="store_true", help="write ASCII instead of binary PLY")
    s.add_argument("--out", required=True, help="output map PLY")
    s.set_defaults(func=cmd_accumulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ManifestError as exc:
        log.error("validation failed: %s", exc)
        return EXIT_VALIDATION
    except (OSError, json.JSONDecodeError) as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO
    except StageError as exc:
        log.error("%s", exc)
        return EXIT_STAGE
    except (ValueError, LookupError) as exc:
        log.error("%s failed: %s", args.command, exc)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
