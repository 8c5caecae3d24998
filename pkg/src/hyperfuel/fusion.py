"""LiDAR colorisation from registered moisture/risk imagery and map accumulation.

The extrinsic consumed here maps LiDAR-frame points into the camera frame,
the inverse of the camera-to-LiDAR transform used to lift image points
into the cloud. No occlusion test is made between points.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from plyfile import PlyData, PlyElement
from scipy.spatial.transform import Rotation

from .geometry import CameraIntrinsics, RigidTransform, project_camera_points, transform_point
from .spectral import (
    RISK_SEVERITY,
    IndexKind,
    IndexMap,
    RiskClass,
    RiskMap,
)

logger = logging.getLogger(__name__)

POSE_MAX_SKEW = 0.05      # s, LiDAR at ~10 Hz
IMAGE_MAX_SKEW = 0.25     # s, HSI at ~2 Hz
DEFAULT_VOXEL = 0.05      # m


class FusionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    intensity: np.ndarray | None = None
    timestamp: float | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.isfinite(pts).all():
            raise FusionError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.intensity is not None:
            inten = np.asarray(self.intensity, dtype=np.float64).reshape(-1)
            if len(inten) != len(pts):
                raise FusionError("intensity length differs from point count")
            object.__setattr__(self, "intensity", inten)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True, eq=False)
class FusedCloud:
    points: np.ndarray           # (N, 3) float64
    color: np.ndarray            # (N, 3) uint8
    moisture: np.ndarray         # (N,) float32, NaN = missing
    risk: np.ndarray             # (N,) uint8 RiskClass codes
    timestamp: float | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        n = len(pts)
        color = np.asarray(self.color, dtype=np.uint8).reshape(-1, 3)
        moisture = np.asarray(self.moisture, dtype=np.float32).reshape(-1)
        risk = np.asarray(self.risk, dtype=np.uint8).reshape(-1)
        if not (len(color) == len(moisture) == len(risk) == n):
            raise FusionError("attribute arrays differ in length from points")
        for name, arr in (("points", pts), ("color", color), ("moisture", moisture), ("risk", risk)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.points)

    @classmethod
    def empty(cls) -> "FusedCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0))


@dataclass(frozen=True)
class PoseStamped:
    pose: RigidTransform   # sensor frame -> world frame
    timestamp: float


def colorize_cloud(cloud: PointCloud, risk: RiskMap, moisture: IndexMap, cam: CameraIntrinsics,
                   extrinsic: RigidTransform, image_dims: tuple[int, int] | None = None,
                   origin: tuple[int, int] = (0, 0)) -> FusedCloud:
    """Attach risk class, palette colour and moisture to each LiDAR point.

    ``extrinsic`` maps LiDAR to camera coordinates. The maps cover RGB
    pixels ``[x0, x0 + width) x [y0, y0 + height)`` where ``origin`` is
    ``(x0, y0)``; ``image_dims`` is ``(width, height)`` and defaults to the
    map size. Points behind the camera or outside the maps keep their
    coordinates and get Unknown / NaN attributes. Sampling is nearest-pixel.
    """
    if moisture.index_kind is not IndexKind.MOISTURE:
        raise FusionError("moisture map has the wrong index kind")
    if risk.classes.shape != moisture.values.shape:
        raise FusionError(f"risk map {risk.classes.shape} and moisture map "
                          f"{moisture.values.shape} differ in size")
    width, height = image_dims if image_dims is not None else (moisture.width, moisture.height)
    if (width, height) != (moisture.width, moisture.height):
        raise FusionError("image_dims do not match the maps")

    n = len(cloud)
    risk_out = np.full(n, RiskClass.UNKNOWN, np.uint8)
    moist_out = np.full(n, np.nan, np.float32)
    if n:
        pc = transform_point(extrinsic, cloud.points)
        z = pc[:, 2]
        front = z > 0
        pix = np.full((n, 2), -1.0)
        pix[front] = project_camera_points(cam, pc[front])
        col = np.floor(pix[:, 0] + 0.5) - origin[0]
        row = np.floor(pix[:, 1] + 0.5) - origin[1]
        seen = front & (col >= 0) & (col < width) & (row >= 0) & (row < height)
        ci, ri = col[seen].astype(np.intp), row[seen].astype(np.intp)
        risk_out[seen] = risk.classes[ri, ci]
        moist_out[seen] = moisture.values[ri, ci].astype(np.float32)
    color = risk.palette_lut()[risk_out]
    return FusedCloud(cloud.points, color, moist_out, risk_out, cloud.timestamp)


def nearest_in_time(timestamps: Sequence[float], t: float, max_skew: float) -> int | None:
    """Index of the nearest timestamp within ``max_skew``; earliest wins ties."""
    best, best_dt = None, None
    for i, ts in enumerate(timestamps):
        dt = abs(ts - t)
        if dt <= max_skew + 1e-12 and (best_dt is None or dt < best_dt):
            best, best_dt = i, dt
    return best


def voxel_downsample(cloud: FusedCloud, edge: float) -> FusedCloud:
    """Keep one point per voxel: the most severe risk class, earliest on ties.

    Output keeps the kept points' original order.
    """
    if edge <= 0:
        raise FusionError("voxel edge must be positive")
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.points / edge).astype(np.int64)
    _, voxel = np.unique(keys, axis=0, return_inverse=True)
    voxel = voxel.reshape(-1)
    severity_lut = np.zeros(256, np.int64)
    for cls, rank in RISK_SEVERITY.items():
        severity_lut[int(cls)] = rank
    severity = severity_lut[cloud.risk]
    order = np.lexsort((np.arange(len(cloud)), -severity, voxel))
    first = np.ones(len(order), bool)
    first[1:] = voxel[order][1:] != voxel[order][:-1]
    keep = np.sort(order[first])
    return FusedCloud(cloud.points[keep], cloud.color[keep], cloud.moisture[keep],
                      cloud.risk[keep], cloud.timestamp)


def accumulate(clouds: Sequence[FusedCloud], poses: Sequence[PoseStamped],
               max_skew: float = POSE_MAX_SKEW, voxel: float | None = None) -> tuple[FusedCloud, int]:
    """Move each cloud into the world frame with its nearest pose and concatenate.

    Returns ``(map, dropped)`` where ``dropped`` counts clouds without a pose
    within ``max_skew`` (or without a timestamp).
    """
    pose_ts = [p.timestamp for p in poses]
    parts, dropped = [], 0
    for cloud in clouds:
        idx = None if cloud.timestamp is None else nearest_in_time(pose_ts, cloud.timestamp, max_skew)
        if idx is None:
            dropped += 1
            continue
        parts.append((transform_point(poses[idx].pose, cloud.points), cloud))
    if dropped:
        logger.warning("accumulate: %d cloud(s) without a pose within %.3f s", dropped, max_skew)
    if not parts:
        return FusedCloud.empty(), dropped
    merged = FusedCloud(
        np.concatenate([p for p, _ in parts]),
        np.concatenate([c.color for _, c in parts]),
        np.concatenate([c.moisture for _, c in parts]),
        np.concatenate([c.risk for _, c in parts]),
    )
    if voxel:
        merged = voxel_downsample(merged, voxel)
    return merged, dropped


# ---------------------------------------------------------------------- I/O

_FUSED_DTYPE = [("x", "<f8"), ("y", "<f8"), ("z", "<f8"),
                ("red", "u1"), ("green", "u1"), ("blue", "u1"),
                ("moisture", "<f4"), ("risk", "u1")]


def write_fused_ply(cloud: FusedCloud, path: str | Path, binary: bool = True) -> None:
    """PLY with x, y, z, red, green, blue, moisture (NaN = missing), risk."""
    v = np.empty(len(cloud), dtype=_FUSED_DTYPE)
    for i, axis in enumerate("xyz"):
        v[axis] = cloud.points[:, i]
    v["red"], v["green"], v["blue"] = cloud.color[:, 0], cloud.color[:, 1], cloud.color[:, 2]
    v["moisture"] = cloud.moisture
    v["risk"] = cloud.risk
    comments = [] if cloud.timestamp is None else [f"timestamp {cloud.timestamp!r}"]
    ply = PlyData([PlyElement.describe(v, "vertex")], text=not binary,
                  byte_order="<", comments=comments)
    ply.write(str(path))


def _timestamp_comment(ply: PlyData) -> float | None:
    for c in ply.comments:
        if c.startswith("timestamp "):
            return float(c.split()[1])
    return None


def read_fused_ply(path: str | Path) -> FusedCloud:
    ply = PlyData.read(str(path))
    v = ply["vertex"].data
    pts = np.stack([v["x"], v["y"], v["z"]], axis=1).astype(np.float64)
    color = np.stack([v["red"], v["green"], v["blue"]], axis=1)
    return FusedCloud(pts, color, v["moisture"], v["risk"], _timestamp_comment(ply))


def write_cloud_ply(cloud: PointCloud, path: str | Path, binary: bool = True) -> None:
    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    if cloud.intensity is not None:
        fields.append(("intensity", "<f4"))
    v = np.empty(len(cloud), dtype=fields)
    for i, axis in enumerate("xyz"):
        v[axis] = cloud.points[:, i]
    if cloud.intensity is not None:
        v["intensity"] = cloud.intensity
    comments = [] if cloud.timestamp is None else [f"timestamp {cloud.timestamp!r}"]
    PlyData([PlyElement.describe(v, "vertex")], text=not binary, byte_order="<",
            comments=comments).write(str(path))


def read_cloud_ply(path: str | Path, timestamp: float | None = None) -> PointCloud:
    """Read x, y, z (and intensity when present) from any PLY vertex element."""
    ply = PlyData.read(str(path))
    v = ply["vertex"].data
    pts = np.stack([v["x"], v["y"], v["z"]], axis=1).astype(np.float64)
    names = v.dtype.names
    intensity = v["intensity"].astype(np.float64) if "intensity" in names else None
    if timestamp is None:
        timestamp = _timestamp_comment(ply)
    return PointCloud(pts, intensity, timestamp)


def read_trajectory(path: str | Path) -> list[PoseStamped]:
    """Lines of ``timestamp tx ty tz qx qy qz qw`` (scalar-last quaternion)."""
    poses = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise FusionError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
        t, tx, ty, tz, qx, qy, qz, qw = map(float, parts)
        rot = Rotation.from_quat([qx, qy, qz, qw]).as_matrix()
        poses.append(PoseStamped(RigidTransform(rot, [tx, ty, tz]), t))
    return poses


def write_trajectory(poses: Sequence[PoseStamped], path: str | Path) -> None:
    lines = ["# timestamp tx ty tz qx qy qz qw"]
    for p in poses:
        q = Rotation.from_matrix(p.pose.rotation).as_quat()
        vals = [p.timestamp, *p.pose.translation, *q]
        lines.append(" ".join(repr(float(v)) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

