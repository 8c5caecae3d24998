"""Session manifests and the batch pipeline.

Stage order is fixed: demosaic, calibrate, register, index, classify,
colorize, accumulate. Each stage persists its products under the output
directory; a run restricted to a subset of stages reads the products of
the skipped stages back from disk, so stage-by-stage runs reproduce a full
run byte for byte.

Output layout::

    frames/<frame>/vnir_raw, swir_raw                 demosaic
    frames/<frame>/{rgb,vnir,swir}_refl                calibrate
    frames/<frame>/registered (+ .mask, .crop.json)    register
    frames/<frame>/{ndwi,ndvi,ndmi,moisture}, moisture.png   index
    frames/<frame>/risk (+ .png, .counts.json)         classify
    clouds/<cloud>.ply                                 colorize
    map.ply                                            accumulate
    stats.json                                         per-stage counts and value statistics
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .calibration import CalibrationSignals, load_signals, nearest_signals, to_reflectance
from .datacube import SpectralCube, load_cube, save_cube
from .fusion import (
    DEFAULT_VOXEL,
    IMAGE_MAX_SKEW,
    POSE_MAX_SKEW,
    FusedCloud,
    accumulate,
    colorize_cloud,
    nearest_in_time,
    read_cloud_ply,
    read_fused_ply,
    read_trajectory,
    write_fused_ply,
)
from .geometry import SensorCalibration, load_calibration
from .mosaic import MosaicLayout, demosaic, load_frame, load_layout
from .registration import RegisteredCube, load_registered, register, save_registered
from .spectral import (
    BandSelection,
    IndexKind,
    IndexMap,
    RiskClass,
    RiskMap,
    classify_risk,
    compute_index,
    load_index,
    load_risk,
    save_index,
    save_index_png,
    save_risk,
)

logger = logging.getLogger(__name__)

STAGES = ("demosaic", "calibrate", "register", "index", "classify", "colorize", "accumulate")
FRAME_STAGES = STAGES[:5]
HSI_SYNC_SKEW = 0.1  # s

EXIT_OK, EXIT_VALIDATION, EXIT_STAGE, EXIT_IO = 0, 1, 2, 3

EXPECTED_BANDS = {"rgb": 3, "vnir": 24, "swir": 9}


class ManifestError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, item: str, message: str):
        super().__init__(f"stage {stage!r} failed on {item}: {message}")
        self.stage, self.item = stage, item


@dataclass(frozen=True)
class FrameRecord:
    timestamp: float
    path: Path


@dataclass
class SessionManifest:
    root: Path
    streams: dict[str, list[FrameRecord]]
    calibration: Path
    signals: dict[str, list[Path]]
    layouts: dict[str, Path]
    poses: Path | None = None
    band_selection: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, root: str | Path) -> "SessionManifest":
        root = Path(root)

        def p(x):
            return root / x

        try:
            streams = {
                name: [FrameRecord(float(r["timestamp"]), p(r["path"])) for r in d["streams"].get(name, [])]
                for name in ("rgb", "vnir", "swir", "lidar")
            }
            return cls(
                root=root,
                streams=streams,
                calibration=p(d["calibration"]),
                signals={k: [p(x) for x in v] for k, v in d["signals"].items()},
                layouts={k: p(v) for k, v in d["layouts"].items()},
                poses=p(d["poses"]) if d.get("poses") else None,
                band_selection=dict(d.get("band_selection") or {}),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"malformed manifest: {exc!r}") from None


def load_manifest(path: str | Path) -> SessionManifest:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from None
    return SessionManifest.from_dict(d, path.parent)


def validate_manifest(manifest: SessionManifest) -> list[str]:
    """Every problem found, as human-readable findings; never raises."""
    findings: list[str] = []

    def need(path: Path, what: str) -> bool:
        if not path.exists():
            findings.append(f"missing {what}: {path}")
            return False
        return True

    need(manifest.calibration, "calibration file")
    if manifest.poses is not None:
        need(manifest.poses, "pose trajectory")
    for name, records in manifest.streams.items():
        for i, rec in enumerate(records):
            need(rec.path, f"{name} frame {i}")
            if i and rec.timestamp <= records[i - 1].timestamp:
                findings.append(
                    f"{name} stream timestamps not strictly increasing at index {i} "
                    f"({records[i - 1].timestamp} then {rec.timestamp})"
                )
    layout_bands = {}
    for sensor in ("vnir", "swir"):
        path = manifest.layouts.get(sensor)
        if path is None:
            findings.append(f"no {sensor} layout file given")
            continue
        if need(path, f"{sensor} layout"):
            try:
                layout_bands[sensor] = load_layout(path).n_bands
            except Exception as exc:  # noqa: BLE001 - every defect becomes a finding
                findings.append(f"unreadable {sensor} layout {path}: {exc}")
                continue
            if layout_bands[sensor] != EXPECTED_BANDS[sensor]:
                findings.append(f"{sensor} layout has {layout_bands[sensor]} bands, "
                                f"expected {EXPECTED_BANDS[sensor]}")
    for sensor in ("rgb", "vnir", "swir"):
        paths = manifest.signals.get(sensor, [])
        if not paths:
            findings.append(f"no {sensor} calibration signals given")
        for path in paths:
            if not need(path, f"{sensor} signals"):
                continue
            try:
                n = len(load_signals(path).wavelengths)
            except Exception as exc:  # noqa: BLE001
                findings.append(f"unreadable {sensor} signals {path}: {exc}")
                continue
            if n != EXPECTED_BANDS[sensor]:
                findings.append(f"{sensor} signals {path} have {n} bands, expected {EXPECTED_BANDS[sensor]}")
    try:
        BandSelection.from_dict(manifest.band_selection)
    except (TypeError, ValueError) as exc:
        findings.append(f"bad band_selection overrides: {exc}")
    return findings


@dataclass
class StageReport:
    stage: str
    frames_in: int = 0
    frames_out: int = 0
    dropped: list[tuple[str, str]] = field(default_factory=list)
    wall_time: float = 0.0
    stats: dict = field(default_factory=dict)

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        d["dropped"] = [{"item": i, "reason": r} for i, r in self.dropped]
        if not timing:
            d.pop("wall_time")
        return d


class _Stats:
    """Running min/mean/max over NaN-free samples, merged in frame order."""

    def __init__(self):
        self.n, self.total, self.lo, self.hi = 0, 0.0, np.inf, -np.inf

    def add(self, values: np.ndarray) -> None:
        v = np.asarray(values, dtype=np.float64).ravel()
        v = v[~np.isnan(v)]
        if v.size:
            self.n += v.size
            self.total += float(v.sum())
            self.lo = min(self.lo, float(v.min()))
            self.hi = max(self.hi, float(v.max()))

    def as_dict(self) -> dict:
        if not self.n:
            return {"count": 0}
        return {"count": self.n, "min": self.lo, "mean": self.total / self.n, "max": self.hi}


# --------------------------------------------------------------- stage steps
# These are shared by the pipeline and the per-stage CLI subcommands.

def stage_demosaic(frame_path: Path, layout: MosaicLayout, frame_id: str, timestamp: float) -> SpectralCube:
    return demosaic(load_frame(frame_path), layout, frame_id=frame_id, timestamp=timestamp)


def stage_calibrate(cube: SpectralCube, candidates: Sequence[CalibrationSignals]) -> SpectralCube:
    return to_reflectance(cube, nearest_signals(candidates, cube.timestamp))


def stage_register(rgb: SpectralCube, vnir: SpectralCube, swir: SpectralCube,
                   calib: SensorCalibration) -> RegisteredCube:
    return register(rgb, vnir, swir, calib.h_rv, calib.h_rs)


def stage_index(cube: SpectralCube, sel: BandSelection) -> dict[IndexKind, IndexMap]:
    """All four indices, rounded to the float32 precision they are stored at."""
    out = {}
    for kind in IndexKind:
        idx = compute_index(cube, kind, sel)
        out[kind] = IndexMap(idx.values.astype(np.float32).astype(np.float64), kind, idx.frame_id, idx.timestamp)
    return out


def stage_classify(moisture: IndexMap) -> RiskMap:
    return classify_risk(moisture)


def stage_colorize(cloud_path: Path, timestamp: float, moisture: IndexMap | None, risk: RiskMap | None,
                   crop: tuple[int, int, int, int] | None, calib: SensorCalibration) -> FusedCloud:
    cloud = read_cloud_ply(cloud_path, timestamp)
    if moisture is None:
        # no risk image close enough in time: attributes stay Unknown
        empty = np.full((1, 1), np.nan)
        moisture = IndexMap(empty, IndexKind.MOISTURE)
        risk = classify_risk(moisture)
        crop = (-10**9, -10**9, 1, 1)
    return colorize_cloud(cloud, risk, moisture, calib.intrinsics, calib.lidar_to_camera,
                          origin=(crop[0], crop[1]))


# ------------------------------------------------------------------ runner

@dataclass
class _Frame:
    frame_id: str
    rgb: FrameRecord
    vnir: FrameRecord | None
    swir: FrameRecord | None


@dataclass
class _FrameResult:
    frame_id: str
    timestamp: float
    dropped: tuple[str, str] | None = None  # (stage, reason)
    stage_time: dict = field(default_factory=dict)
    stage_values: dict = field(default_factory=dict)
    moisture: IndexMap | None = None
    risk: RiskMap | None = None
    crop: tuple[int, int, int, int] | None = None


def group_frames(manifest: SessionManifest) -> list[_Frame]:
    """Pair each RGB record with the nearest VNIR and SWIR records within 0.1 s."""
    vts = [r.timestamp for r in manifest.streams["vnir"]]
    sts = [r.timestamp for r in manifest.streams["swir"]]
    frames = []
    for i, rec in enumerate(manifest.streams["rgb"]):
        vi = nearest_in_time(vts, rec.timestamp, HSI_SYNC_SKEW)
        si = nearest_in_time(sts, rec.timestamp, HSI_SYNC_SKEW)
        frames.append(_Frame(f"{i:04d}", rec,
                             None if vi is None else manifest.streams["vnir"][vi],
                             None if si is None else manifest.streams["swir"][si]))
    return frames


class _Context:
    def __init__(self, manifest: SessionManifest, out: Path, stages: set[str], persist: bool):
        self.manifest = manifest
        self.out = out
        self.stages = stages
        self.persist = persist
        self.calib = load_calibration(manifest.calibration)
        self.layouts = {s: load_layout(p) for s, p in manifest.layouts.items()}
        self.signals = {s: [load_signals(p) for p in ps] for s, ps in manifest.signals.items()}
        self.selection = BandSelection.from_dict(manifest.band_selection)

    def frame_dir(self, fid: str) -> Path:
        return self.out / "frames" / fid


def _process_frame(ctx: _Context, frame: _Frame) -> _FrameResult:
    """Per-frame stages. Selected stages are computed and persisted; the
    products of unselected stages are read back only when a selected stage
    consumes them."""
    res = _FrameResult(frame.frame_id, frame.rgb.timestamp)
    d = ctx.frame_dir(frame.frame_id)
    run = ctx.stages.__contains__
    colorize = run("colorize")
    need_risk = run("classify") or colorize
    need_moisture = run("index") or need_risk
    need_registered = run("register") or run("index")
    need_refl = run("calibrate") or run("register")
    need_raw = run("demosaic") or run("calibrate")
    if not (need_moisture or need_registered or need_refl or need_raw):
        return res
    if frame.vnir is None or frame.swir is None:
        missing = "VNIR" if frame.vnir is None else "SWIR"
        res.dropped = ("demosaic", f"no {missing} frame within {HSI_SYNC_SKEW} s of RGB frame")
        return res

    def timed(stage: str, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        except OSError:
            raise
        except Exception as exc:
            raise StageError(stage, f"frame {frame.frame_id}", str(exc)) from exc
        finally:
            res.stage_time[stage] = res.stage_time.get(stage, 0.0) + time.perf_counter() - t0

    def product(stage: str, compute, load):
        return timed(stage, compute if run(stage) else load)

    def persist(stage: str, save, always: bool = False) -> None:
        if run(stage) and (ctx.persist or always):
            d.mkdir(parents=True, exist_ok=True)
            timed(stage, save)

    raw = {}
    if need_raw:
        for sensor, rec in (("vnir", frame.vnir), ("swir", frame.swir)):
            key = f"{sensor}_raw"
            raw[sensor] = product(
                "demosaic",
                lambda s=sensor, r=rec: stage_demosaic(r.path, ctx.layouts[s], frame.frame_id, r.timestamp),
                lambda k=key: load_cube(d / k))
            if run("demosaic"):
                res.stage_values.setdefault("demosaic", []).append(raw[sensor].planes)
                persist("demosaic", lambda c=raw[sensor], k=key: save_cube(c, d / k))

    refl = {}
    if need_refl:
        for sensor in ("rgb", "vnir", "swir"):
            key = f"{sensor}_refl"

            def compute(sensor=sensor):
                if sensor == "rgb":
                    cube = load_cube(frame.rgb.path).replace(frame_id=frame.frame_id)
                else:
                    cube = raw[sensor]
                return stage_calibrate(cube, ctx.signals[sensor])

            refl[sensor] = product("calibrate", compute, lambda k=key: load_cube(d / k))
            if run("calibrate"):
                res.stage_values.setdefault("calibrate", []).append(refl[sensor].planes)
                persist("calibrate", lambda c=refl[sensor], k=key: save_cube(c, d / k))
    raw.clear()

    reg = None
    if need_registered:
        reg = product("register",
                      lambda: stage_register(refl["rgb"], refl["vnir"], refl["swir"], ctx.calib),
                      lambda: load_registered(d / "registered"))
        if run("register"):
            res.stage_values["register"] = [reg.cube.planes]
            persist("register", lambda: save_registered(reg, d / "registered"))
    refl.clear()
    if not need_moisture:
        return res

    indices = None
    if run("index"):
        indices = timed("index", lambda: stage_index(reg.cube, ctx.selection))
        moisture = indices[IndexKind.MOISTURE]
        res.stage_values["index"] = [moisture.values]

        def save_indices():
            for kind, idx in indices.items():
                if ctx.persist or kind is IndexKind.MOISTURE:
                    save_index(idx, d / kind.value)
            save_index_png(moisture, d / "moisture.png")

        persist("index", save_indices, always=True)
    else:
        moisture = timed("index", lambda: load_index(d / "moisture"))
    if not need_risk:
        return res

    risk = product("classify", lambda: stage_classify(moisture), lambda: load_risk(d / "risk"))
    if run("classify"):
        res.stage_values["classify"] = [risk.classes]
        persist("classify", lambda: save_risk(risk, d / "risk"), always=True)
    if colorize:
        res.moisture, res.risk = moisture, risk
        res.crop = reg.crop_rect if reg is not None else _read_crop(d)
    return res


def _read_crop(d: Path) -> tuple[int, int, int, int]:
    c = json.loads((d / "registered.crop.json").read_text(encoding="utf-8"))
    return c["x0"], c["y0"], c["width"], c["height"]


def run_pipeline(manifest: SessionManifest, output_dir: str | Path, stages: Iterable[str] | None = None,
                 workers: int = 1, persist_intermediates: bool = True, voxel: float | None = DEFAULT_VOXEL,
                 binary_ply: bool = True) -> list[StageReport]:
    """Run the selected stages over every frame of ``manifest``.

    Returns one :class:`StageReport` per selected stage. Raises
    :class:`ManifestError` when the manifest does not validate and
    :class:`StageError` naming the offending frame when a stage fails.
    """
    selected = set(STAGES if stages is None else stages)
    unknown = selected - set(STAGES)
    if unknown:
        raise ValueError(f"unknown stage(s): {', '.join(sorted(unknown))}")
    if not persist_intermediates and selected != set(STAGES):
        raise ValueError("a partial stage run needs persisted intermediates")
    findings = validate_manifest(manifest)
    if findings:
        raise ManifestError("; ".join(findings))

    out = Path(output_dir)
    reports = {s: StageReport(s) for s in STAGES if s in selected}
    frames = group_frames(manifest)
    lidar = manifest.streams["lidar"]
    if not frames and not lidar:
        return []

    out.mkdir(parents=True, exist_ok=True)
    ctx = _Context(manifest, out, selected, persist_intermediates)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda f: _process_frame(ctx, f), frames))
    else:
        results = [_process_frame(ctx, f) for f in frames]

    stats = {s: _Stats() for s in FRAME_STAGES}
    for res in results:
        for stage, arrays in res.stage_values.items():
            for a in arrays:
                stats[stage].add(a)
    for stage in FRAME_STAGES:
        if stage not in reports:
            continue
        rep = reports[stage]
        alive = [r for r in results if r.dropped is None or STAGES.index(r.dropped[0]) > STAGES.index(stage)]
        prior_drop = [r for r in results if r.dropped is not None and STAGES.index(r.dropped[0]) < STAGES.index(stage)]
        rep.frames_in = len(results) - len(prior_drop)
        rep.frames_out = len(alive)
        rep.dropped = [(r.frame_id, r.dropped[1]) for r in results
                       if r.dropped is not None and r.dropped[0] == stage]
        rep.wall_time = sum(r.stage_time.get(stage, 0.0) for r in results)
        if stage == "classify":
            counts = {c.name.lower(): 0 for c in RiskClass}
            for r in results:
                for classes in r.stage_values.get("classify", ()):
                    for c in RiskClass:
                        counts[c.name.lower()] += int((classes == c).sum())
            rep.stats = {"class_counts": counts}
        else:
            rep.stats = stats[stage].as_dict()

    fused: list[FusedCloud] = []
    if "colorize" in selected or "accumulate" in selected:
        fused = _fuse(ctx, results, lidar, reports, binary_ply)
    if "accumulate" in selected:
        _accumulate(ctx, fused, lidar, reports, voxel, binary_ply)

    ordered = [reports[s] for s in STAGES if s in reports]
    (out / "stats.json").write_text(
        json.dumps([r.to_dict(timing=False) for r in ordered], indent=2) + "\n", encoding="utf-8")
    return ordered


def _fuse(ctx: _Context, results: list[_FrameResult], lidar: list[FrameRecord],
          reports: dict, binary_ply: bool) -> list[FusedCloud]:
    cloud_dir = ctx.out / "clouds"
    usable = [r for r in results if r.dropped is None and r.moisture is not None]
    img_ts = [r.timestamp for r in usable]
    fused = []
    rep = reports.get("colorize")
    st = _Stats()
    uncolored: list[str] = []
    t0 = time.perf_counter()
    for j, rec in enumerate(lidar):
        cid = f"{j:04d}"
        path = cloud_dir / f"{cid}.ply"
        if rep is None:
            fused.append(read_fused_ply(path))
            continue
        k = nearest_in_time(img_ts, rec.timestamp, IMAGE_MAX_SKEW)
        src = usable[k] if k is not None else None
        try:
            fc = stage_colorize(rec.path, rec.timestamp,
                                src.moisture if src else None, src.risk if src else None,
                                src.crop if src else None, ctx.calib)
        except (OSError, FileNotFoundError):
            raise
        except Exception as exc:
            raise StageError("colorize", f"cloud {cid}", str(exc)) from exc
        if src is None:
            # the cloud is kept; its points just stay Unknown
            uncolored.append(cid)
            logger.warning("cloud %s: no risk image within %.2f s", cid, IMAGE_MAX_SKEW)
        cloud_dir.mkdir(parents=True, exist_ok=True)
        write_fused_ply(fc, path, binary=binary_ply)
        st.add(fc.moisture)
        fused.append(fc)
    if rep is not None:
        rep.frames_in = len(lidar)
        rep.frames_out = len(lidar) - len(rep.dropped)
        rep.wall_time = time.perf_counter() - t0
        rep.stats = st.as_dict()
        rep.stats["points"] = int(sum(len(f) for f in fused))
        rep.stats["clouds_without_image"] = uncolored
    return fused


def _accumulate(ctx: _Context, fused: list[FusedCloud], lidar: list[FrameRecord], reports: dict,
                voxel: float | None, binary_ply: bool) -> None:
    rep = reports["accumulate"]
    t0 = time.perf_counter()
    rep.frames_in = len(fused)
    if ctx.manifest.poses is None:
        rep.dropped = [(f"{j:04d}", "no pose trajectory in manifest") for j in range(len(fused))]
        rep.wall_time = time.perf_counter() - t0
        return
    poses = read_trajectory(ctx.manifest.poses)
    pose_ts = [p.timestamp for p in poses]
    for j, fc in enumerate(fused):
        if fc.timestamp is None or nearest_in_time(pose_ts, fc.timestamp, POSE_MAX_SKEW) is None:
            rep.dropped.append((f"{j:04d}", f"no pose within {POSE_MAX_SKEW} s"))
    merged, _ = accumulate(fused, poses, POSE_MAX_SKEW, voxel)
    if len(fused):
        write_fused_ply(merged, ctx.out / "map.ply", binary=binary_ply)
    rep.frames_out = len(fused) - len(rep.dropped)
    rep.wall_time = time.perf_counter() - t0
    st = _Stats()
    st.add(merged.moisture)
    rep.stats = st.as_dict()
    rep.stats["points"] = len(merged)


def format_reports(reports: Sequence[StageReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2)


def throughput(reports: Sequence[StageReport]) -> float:
    """Frames per second over the summed stage wall time."""
    total = sum(r.wall_time for r in reports)
    frames = next((r.frames_out for r in reports if r.stage == "classify"), None)
    if frames is None:
        frames = max((r.frames_out for r in reports), default=0)
    return frames / total if total > 0 else float("inf")
