"""Synthetic sessions with analytic ground truth.

The scene is a flat wall facing the camera at a fixed depth. A moisture
field is painted on the wall, every band's reflectance is an affine
function of moisture, and the rig slides sideways along the wall between
frames. Ground truth comes from closed-form ray/plane geometry, not from
the processing path under test.

Designed reflectances are quantised to multiples of 2**-20 and raw counts
are ``dark + reflectance * 4096`` with integer darks, so every stored
float32 sample is exact and calibration recovers the design bit-for-bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .calibration import CalibrationSignals, save_signals
from .datacube import CubeKind, Sensor, SpectralCube, save_cube, save_plane, sensor_bands
from .fusion import FusedCloud, PointCloud, PoseStamped, write_cloud_ply, write_fused_ply, write_trajectory
from .geometry import CameraIntrinsics, Homography, RigidTransform, SensorCalibration, save_calibration
from .mosaic import default_layout, mosaic, save_frame, save_layout
from .spectral import BandSelection, DEFAULT_PALETTE, classify_values, normalized_difference

RGB_WAVELENGTHS = (465.0, 540.0, 625.0)
QUANTUM = 2.0 ** -20
SPAN = 4096.0              # reference - dark, raw counts
FRAME_PERIOD = 0.5         # s
FIRST_FRAME_TIME = 1.0     # s
LATERAL_STEP = 0.05        # m per frame
MOISTURE_PAIR_LEVEL = 0.3  # reflectance of both moisture bands at zero moisture

# LiDAR (x fwd, y left, z up) -> camera (x right, y down, z fwd)
LIDAR_TO_CAMERA_ROTATION = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
LIDAR_TO_CAMERA_TRANSLATION = np.array([0.02, 0.08, -0.05])


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticScene:
    field: str = "ramp"                 # ramp | constant | checker
    constant: float = 0.6
    checker_cell: float = 0.5           # m on the wall
    checker_values: tuple[float, float] = (0.1, 0.8)
    depth: float = 5.0                  # wall distance from the camera, m
    noise: float = 0.0                  # additive reflectance sigma, every band
    seed: int = 0

    def __post_init__(self):
        if self.field not in ("ramp", "constant", "checker"):
            raise SynthError(f"unknown moisture field {self.field!r}")
        if self.depth <= 0:
            raise SynthError("wall depth must be positive")
        if self.noise < 0:
            raise SynthError("noise sigma must be non-negative")


# ------------------------------------------------------------ reflectance model

def band_model(wavelengths, moisture_bands: tuple[int, int] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-band ``(base, slope)`` with ``reflectance = base + slope * moisture``.

    A loose vegetation shape (green bump, red edge, falling SWIR). The two
    ``moisture_bands`` (index of the ~1300 nm band, index of the ~1119 nm
    band) get ``c(1 + m)`` and ``c(1 - m)`` so their normalized difference
    equals the moisture value.
    """
    wl = np.asarray(wavelengths, dtype=np.float64)
    base = (0.05 + 0.05 * np.exp(-((wl - 550.0) / 40.0) ** 2)
            + 0.40 / (1.0 + np.exp(-(wl - 720.0) / 15.0))
            - 0.15 * np.clip((wl - 1000.0) / 700.0, 0.0, 1.0))
    slope = 0.05 / (1.0 + np.exp(-(wl - 720.0) / 15.0)) - 0.08 * (wl > 1000.0) - 0.02 * (wl < 700.0)
    if moisture_bands is not None:
        a, b = moisture_bands
        base[a], slope[a] = MOISTURE_PAIR_LEVEL, MOISTURE_PAIR_LEVEL
        base[b], slope[b] = MOISTURE_PAIR_LEVEL, -MOISTURE_PAIR_LEVEL
    return base, slope


def quantize(r: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(r, dtype=np.float64) / QUANTUM) * QUANTUM


def nearest_index(wavelengths, target: float) -> int:
    return int(np.argmin(np.abs(np.asarray(wavelengths) - target)))


# ---------------------------------------------------------------- rig model

@dataclass(frozen=True)
class Rig:
    width: int
    height: int
    intrinsics: CameraIntrinsics
    lidar_to_camera: RigidTransform
    h_rv: Homography
    h_rs: Homography
    vnir_dims: tuple[int, int]   # width, height of the demosaiced VNIR cube
    swir_dims: tuple[int, int]

    def column_span(self) -> tuple[float, float]:
        """RGB columns spanned by the RGB frame and both sensor footprints."""
        lo, hi = 0.0, float(self.width - 1)
        for h, (sw, _) in ((self.h_rv, self.vnir_dims), (self.h_rs, self.swir_dims)):
            m = h.h
            ends = (m[0, 2], m[0, 0] * (sw - 1) + m[0, 2])
            lo, hi = min(lo, *ends), max(hi, *ends)
        return lo, hi

    def pose(self, i: int) -> RigidTransform:
        """LiDAR frame of frame ``i`` -> world (LiDAR frame of frame 0)."""
        return RigidTransform(np.eye(3), [0.0, -LATERAL_STEP * i, 0.0])


def _cover_dims(scale: float, offset: float, out: int) -> int:
    # smallest source size whose footprint covers [0, out - 1]
    return int(math.ceil((out - 1 - offset) / scale)) + 1


def make_rig(width: int, height: int, registration: str = "affine") -> Rig:
    k = CameraIntrinsics(fx=0.85 * width, fy=0.85 * width, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0)
    ext = RigidTransform(LIDAR_TO_CAMERA_ROTATION, LIDAR_TO_CAMERA_TRANSLATION)
    if registration == "identity":
        h_rv = h_rs = Homography.identity()
        vd = sd = (width, height)
    elif registration == "translation":
        # footprints only partly cover the RGB frame, so the crop is non-trivial
        h_rv = Homography.translation(2.5, 1.25)
        h_rs = Homography.translation(-1.5, 0.75)
        vd = sd = (width, height)
    elif registration == "affine":
        h_rv = Homography.affine(2.0, 2.0, -6.0, -5.0)
        h_rs = Homography.affine(3.0, 3.0, -4.5, -3.0)
        vd = (_cover_dims(2.0, -6.0, width), _cover_dims(2.0, -5.0, height))
        sd = (_cover_dims(3.0, -4.5, width), _cover_dims(3.0, -3.0, height))
    else:
        raise SynthError(f"unknown registration preset {registration!r}")
    return Rig(width, height, k, ext, h_rv, h_rs, vd, sd)


def expected_crop(rig: Rig) -> tuple[int, int, int, int]:
    """Analytic joint footprint of two axis-aligned (scale + shift) homographies."""
    x_lo, y_lo, x_hi, y_hi = 0, 0, rig.width - 1, rig.height - 1
    for h, (sw, sh) in ((rig.h_rv, rig.vnir_dims), (rig.h_rs, rig.swir_dims)):
        m = h.h
        if m[0, 1] or m[1, 0] or m[2, 0] or m[2, 1]:
            raise SynthError("expected_crop handles scale + translation homographies only")
        x_lo = max(x_lo, math.ceil(m[0, 2] - 1e-9))
        x_hi = min(x_hi, math.floor(m[0, 2] + m[0, 0] * (sw - 1) + 1e-9))
        y_lo = max(y_lo, math.ceil(m[1, 2] - 1e-9))
        y_hi = min(y_hi, math.floor(m[1, 2] + m[1, 1] * (sh - 1) + 1e-9))
    return x_lo, y_lo, x_hi - x_lo + 1, y_hi - y_lo + 1


def wall_coordinates(rig: Rig, depth: float, frame: int, u: np.ndarray, v: np.ndarray):
    """World wall coordinates ``(s, z)`` seen at RGB pixel ``(u, v)`` of ``frame``.

    ``s`` runs along the wall in the direction of travel, ``z`` is up.
    """
    k = rig.intrinsics
    yc = depth * (v - k.cy) / k.fy
    xc = depth * (u - k.cx - k.skew * (v - k.cy) / k.fy) / k.fx
    pc = np.stack([xc, yc, np.full_like(xc, depth)], axis=-1)
    r, t = rig.lidar_to_camera.rotation, rig.lidar_to_camera.translation
    pl = (pc - t) @ r                     # R^T (pc - t), row-vector form
    pw = pl + rig.pose(frame).translation
    return -pw[..., 1], pw[..., 2]


def moisture_field(scene: SyntheticScene, rig: Rig, n_frames: int, frame: int, u, v) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    s, z = wall_coordinates(rig, scene.depth, frame, u, v)
    if scene.field == "constant":
        return np.full(s.shape, scene.constant)
    if scene.field == "checker":
        parity = (np.floor(s / scene.checker_cell) + np.floor(z / scene.checker_cell)) % 2
        return np.where(parity == 0, scene.checker_values[0], scene.checker_values[1])
    # ramp: 0 at the left edge of the first frame's footprint, 1 at the right
    # edge of the last one, so every sensor sample stays within [0, 1]
    cy = np.float64(rig.intrinsics.cy)
    lo, hi = rig.column_span()
    s0, _ = wall_coordinates(rig, scene.depth, 0, np.float64(lo), cy)
    s1, _ = wall_coordinates(rig, scene.depth, n_frames - 1, np.float64(hi), cy)
    return (s - s0) / (s1 - s0)


def ramp_crossing(scene: SyntheticScene, rig: Rig, n_frames: int, frame: int, level: float) -> float:
    """RGB column (fractional) where the ramp reaches ``level`` in ``frame``."""
    cy = rig.intrinsics.cy
    m0 = float(moisture_field(scene, rig, n_frames, frame, 0.0, cy))
    m1 = float(moisture_field(scene, rig, n_frames, frame, 1.0, cy))
    return (level - m0) / (m1 - m0)


# ---------------------------------------------------------------- rendering

def _grid_to_rgb(h: Homography, w: int, hgt: int):
    b, a = np.mgrid[0:hgt, 0:w].astype(np.float64)
    m = h.h
    den = m[2, 0] * a + m[2, 1] * b + m[2, 2]
    return (m[0, 0] * a + m[0, 1] * b + m[0, 2]) / den, (m[1, 0] * a + m[1, 1] * b + m[1, 2]) / den


def _designed_reflectance(m: np.ndarray, base: np.ndarray, slope: np.ndarray,
                          rng: np.random.Generator | None, noise: float) -> np.ndarray:
    r = base[:, None, None] + slope[:, None, None] * m[None]
    if noise > 0 and rng is not None:
        r = r + rng.normal(0.0, noise, size=r.shape)
    return quantize(r)


def _darks(n: int, first: int) -> np.ndarray:
    return np.array([first + 3 * i for i in range(n)], dtype=np.float64)


def _lidar_scan(rig: Rig, depth: float) -> np.ndarray:
    """VLP-16 style rings hitting the wall, plus a few returns from behind the rig."""
    elev = np.deg2rad(np.arange(-15.0, 16.0, 2.0))
    az_front = np.deg2rad(np.linspace(-50.0, 50.0, 501))
    az_back = np.deg2rad(np.linspace(160.0, 200.0, 41))
    r, t = rig.lidar_to_camera.rotation, rig.lidar_to_camera.translation
    # wall: camera z == depth  <=>  n . p_lidar == depth - t_z with n = R[2]
    normal, offset = r[2], depth - t[2]
    pts = []
    for az_set, plane_n, plane_d in ((az_front, normal, offset), (az_back, -normal, 3.0)):
        e, a = np.meshgrid(elev, az_set, indexing="ij")
        dirs = np.stack([np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)], axis=-1).reshape(-1, 3)
        rng_ = plane_d / (dirs @ plane_n)
        pts.append(dirs * rng_[:, None])
    return np.concatenate(pts)


def render_session(scene: SyntheticScene, n_frames: int, out_dir: str | Path,
                   dims: tuple[int, int] = (816, 684), registration: str = "affine",
                   drop_swir: tuple[int, ...] = (), binary_ply: bool = True) -> Path:
    """Write a ready-to-run session plus ground truth; returns the manifest path.

    ``drop_swir`` lists frame indices whose SWIR frame is left out, to
    exercise degraded input handling.
    """
    if n_frames < 1:
        raise SynthError("n_frames must be >= 1")
    width, height = dims
    if width < 2 or height < 2:
        raise SynthError("image dims must be at least 2x2")
    out = Path(out_dir)
    for sub in ("frames", "layouts", "signals", "ground_truth"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    rig = make_rig(width, height, registration)
    vlay, slay = default_layout(Sensor.VNIR), default_layout(Sensor.SWIR)
    save_layout(vlay, out / "layouts" / "vnir.json")
    save_layout(slay, out / "layouts" / "swir.json")
    calib = SensorCalibration(rig.h_rv, rig.h_rs, rig.intrinsics, rig.lidar_to_camera, "lidar_to_camera")
    save_calibration(calib, out / "calibration.json")

    sel = BandSelection()
    swir_wl = slay.band_wavelengths
    pair = (nearest_index(swir_wl, sel.moisture_a), nearest_index(swir_wl, sel.moisture_b))
    models = {
        Sensor.RGB: band_model(RGB_WAVELENGTHS),
        Sensor.VNIR: band_model(vlay.band_wavelengths),
        Sensor.SWIR: band_model(swir_wl, pair),
    }
    wavelengths = {Sensor.RGB: RGB_WAVELENGTHS, Sensor.VNIR: vlay.band_wavelengths, Sensor.SWIR: swir_wl}
    darks = {Sensor.RGB: _darks(3, 40), Sensor.VNIR: _darks(24, 100), Sensor.SWIR: _darks(9, 150)}
    for sensor in Sensor:
        base, slope = models[sensor]
        hi = np.maximum(base, base + slope)
        lo = np.minimum(base, base + slope)
        if lo.min() < 0 or hi.max() > 1.5:
            raise SynthError(f"{sensor.value} reflectance model leaves [0, 1.5]")
        save_signals(CalibrationSignals(sensor, wavelengths[sensor], darks[sensor], darks[sensor] + SPAN,
                                        timestamp=0.0, reference_description="synthetic PTFE panel"),
                     out / "signals" / f"{sensor.value.lower()}.json")

    homographies = {Sensor.RGB: Homography.identity(), Sensor.VNIR: rig.h_rv, Sensor.SWIR: rig.h_rs}
    grid_dims = {Sensor.RGB: (width, height), Sensor.VNIR: rig.vnir_dims, Sensor.SWIR: rig.swir_dims}
    grids = {s: _grid_to_rgb(homographies[s], *grid_dims[s]) for s in Sensor}
    uu, vv = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    crop = expected_crop(rig) if registration != "identity" else (0, 0, width, height)
    scan = _lidar_scan(rig, scene.depth)

    streams = {"rgb": [], "vnir": [], "swir": [], "lidar": []}
    poses, truth_frames = [], []
    for i in range(n_frames):
        fid = f"{i:04d}"
        t = FIRST_FRAME_TIME + FRAME_PERIOD * i
        rng = np.random.default_rng([scene.seed, i])
        for sensor, key, dt in ((Sensor.RGB, "rgb", 0.0), (Sensor.VNIR, "vnir", 0.01), (Sensor.SWIR, "swir", 0.02)):
            if sensor is Sensor.SWIR and i in drop_swir:
                continue
            m = moisture_field(scene, rig, n_frames, i, *grids[sensor])
            refl = _designed_reflectance(m, *models[sensor], rng, scene.noise)
            raw = darks[sensor][:, None, None] + refl * SPAN
            cube = SpectralCube(raw, tuple(sensor_bands(sensor, wavelengths[sensor])), CubeKind.RAW,
                                frame_id=fid, timestamp=t + dt)
            rel = f"frames/{key}_{fid}"
            if sensor is Sensor.RGB:
                save_cube(cube, out / rel)
            else:
                layout = vlay if sensor is Sensor.VNIR else slay
                save_frame(mosaic(cube, layout, fill=darks[sensor][0]), out / rel, sensor, t + dt)
            streams[key].append({"timestamp": t + dt, "path": rel + ".hdr"})

        # ground truth on the RGB grid, noise-free
        m_rgb = moisture_field(scene, rig, n_frames, i, uu, vv)
        base, slope = models[Sensor.SWIR]
        ra = quantize(base[pair[0]] + slope[pair[0]] * m_rgb)
        rb = quantize(base[pair[1]] + slope[pair[1]] * m_rgb)
        gt_moist = normalized_difference(ra.astype(np.float32), rb.astype(np.float32)).astype(np.float32)
        gt_risk = classify_values(gt_moist)
        save_plane(gt_moist, out / "ground_truth" / f"moisture_{fid}", "index", index_kind="moisture",
                   frame_id=fid, timestamp=repr(t))
        save_plane(gt_risk, out / "ground_truth" / f"risk_{fid}", "risk-classes", frame_id=fid,
                   timestamp=repr(t))

        lt = t + 0.005
        cloud = PointCloud(scan, np.full(len(scan), 0.5), lt)
        write_cloud_ply(cloud, out / "frames" / f"lidar_{fid}.ply", binary=binary_ply)
        streams["lidar"].append({"timestamp": lt, "path": f"frames/lidar_{fid}.ply"})
        poses.append(PoseStamped(rig.pose(i), lt))
        write_fused_ply(_expected_fused(rig, scan, gt_moist, gt_risk, crop, lt),
                        out / "ground_truth" / f"fused_{fid}.ply", binary=binary_ply)

        entry = {"frame_id": fid, "timestamp": t, "expected_crop": list(crop)}
        if scene.field == "ramp":
            entry["medium_start_column"] = ramp_crossing(scene, rig, n_frames, i, 0.2)
            entry["low_start_column"] = ramp_crossing(scene, rig, n_frames, i, 0.5)
        truth_frames.append(entry)

    write_trajectory(poses, out / "poses.txt")
    truth = {
        "scene": asdict(scene),
        "n_frames": n_frames,
        "dims": [width, height],
        "registration": registration,
        "moisture_bands_nm": [swir_wl[pair[0]], swir_wl[pair[1]]],
        "frames": truth_frames,
    }
    (out / "ground_truth" / "truth.json").write_text(json.dumps(truth, indent=2) + "\n", encoding="utf-8")
    manifest = {
        "calibration": "calibration.json",
        "layouts": {"vnir": "layouts/vnir.json", "swir": "layouts/swir.json"},
        "signals": {s.value.lower(): [f"signals/{s.value.lower()}.json"] for s in Sensor},
        "poses": "poses.txt",
        "band_selection": {},
        "streams": streams,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def _expected_fused(rig: Rig, scan: np.ndarray, moisture: np.ndarray, risk: np.ndarray,
                    crop: tuple[int, int, int, int], timestamp: float) -> FusedCloud:
    """Attributes at each point's nearest RGB pixel, or Unknown outside the crop."""
    k = rig.intrinsics
    pc = scan @ rig.lidar_to_camera.rotation.T + rig.lidar_to_camera.translation
    n = len(scan)
    codes = np.full(n, 255, np.uint8)
    moist = np.full(n, np.nan, np.float32)
    front = pc[:, 2] > 0
    u = np.full(n, -1.0)
    v = np.full(n, -1.0)
    u[front] = k.fx * pc[front, 0] / pc[front, 2] + k.cx
    v[front] = k.fy * pc[front, 1] / pc[front, 2] + k.cy
    col, row = np.floor(u + 0.5), np.floor(v + 0.5)
    x0, y0, cw, ch = crop
    seen = front & (col >= x0) & (col < x0 + cw) & (row >= y0) & (row < y0 + ch)
    ci, ri = col[seen].astype(int), row[seen].astype(int)
    codes[seen] = risk[ri, ci]
    moist[seen] = moisture[ri, ci]
    lut = np.zeros((256, 3), np.uint8)
    lut[:] = DEFAULT_PALETTE[255]
    for c, rgb in DEFAULT_PALETTE.items():
        lut[int(c)] = rgb
    return FusedCloud(scan, lut[codes], moist, codes, timestamp)
