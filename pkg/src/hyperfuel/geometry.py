"""Projective and rigid geometry: homographies, pinhole intrinsics, rigid transforms.

Conventions: column vectors premultiplied by matrices; pixel origin at the
top-left corner with x right, y down and pixel centers on integer
coordinates. All functions accept a single point or an ``(N, k)`` array.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HOMOGENEOUS_EPS = 1e-12
ORTHONORMAL_TOL = 1e-9


class GeometryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Homography:
    h: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=np.float64).reshape(3, 3)
        if not np.isfinite(h).all():
            raise GeometryError("homography has non-finite entries")
        if h[2, 2] != 0:
            h = h / h[2, 2]
        if abs(np.linalg.det(h)) <= 1e-12:
            raise GeometryError("degenerate homography (determinant ~ 0)")
        h.flags.writeable = False
        object.__setattr__(self, "h", h)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        return cls([[1, 0, tx], [0, 1, ty], [0, 0, 1]])

    @classmethod
    def affine(cls, sx: float, sy: float, tx: float, ty: float, shear: float = 0.0) -> "Homography":
        return cls([[sx, shear, tx], [0, sy, ty], [0, 0, 1]])

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.h))

    def __matmul__(self, other: "Homography") -> "Homography":
        return Homography(self.h @ other.h)

    def to_list(self) -> list[float]:
        return [float(v) for v in self.h.ravel()]

    def __eq__(self, other):
        return isinstance(other, Homography) and np.array_equal(self.h, other.h)

    __hash__ = None


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError("focal lengths must be positive")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, self.skew, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.isfinite(r).all() and np.isfinite(t).all()):
            raise GeometryError("rigid transform has non-finite entries")
        if np.abs(r.T @ r - np.eye(3)).max() > ORTHONORMAL_TOL:
            raise GeometryError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ORTHONORMAL_TOL:
            raise GeometryError("rotation is a reflection (det != +1)")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def __eq__(self, other):
        return (isinstance(other, RigidTransform)
                and np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))

    __hash__ = None


def apply_homography(h: Homography, points) -> np.ndarray:
    """Map pixel coordinates through ``h`` and dehomogenise.

    Raises :class:`GeometryError` if any point maps to infinity.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if not np.isfinite(pts).all():
        raise GeometryError("non-finite input point")
    m = h.h
    x, y = pts[:, 0], pts[:, 1]
    w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if (np.abs(w) < HOMOGENEOUS_EPS).any():
        raise GeometryError("point maps to infinity")
    out = np.stack([(m[0, 0] * x + m[0, 1] * y + m[0, 2]) / w,
                    (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / w], axis=1)
    return out[0] if single else out


def unproject_pixel(k: CameraIntrinsics, pixel, depth) -> np.ndarray:
    """``depth * K^-1 * (u, v, 1)``, the camera-frame point at the given depth."""
    px = np.asarray(pixel, dtype=np.float64)
    single = px.ndim == 1
    px = np.atleast_2d(px)
    z = np.broadcast_to(np.asarray(depth, dtype=np.float64), (px.shape[0],))
    if not (z > 0).all():
        raise GeometryError("depth must be positive")
    # closed-form inverse of the upper-triangular K
    y = (px[:, 1] - k.cy) / k.fy
    x = (px[:, 0] - k.cx - k.skew * y) / k.fx
    out = np.stack([x * z, y * z, z], axis=1)
    return out[0] if single else out


def transform_point(t: RigidTransform, p) -> np.ndarray:
    """``rotation @ p + translation``."""
    pts = np.asarray(p, dtype=np.float64)
    if pts.ndim == 1:
        return t.rotation @ pts + t.translation
    return pts @ t.rotation.T + t.translation


def project_camera_points(k: CameraIntrinsics, pc: np.ndarray) -> np.ndarray:
    """Pinhole projection of camera-frame points with positive z (no checks)."""
    x = pc[..., 0] / pc[..., 2]
    y = pc[..., 1] / pc[..., 2]
    return np.stack([k.fx * x + k.skew * y + k.cx, k.fy * y + k.cy], axis=-1)


def project_point(k: CameraIntrinsics, t_inv: RigidTransform, p_lidar) -> tuple[np.ndarray, np.ndarray | float]:
    """Project LiDAR-frame point(s) into the image.

    ``t_inv`` maps the LiDAR frame into the camera frame. Returns
    ``(pixel, depth)`` with depth the camera-frame z.
    """
    pc = transform_point(t_inv, p_lidar)
    z = pc[..., 2]
    if not (np.asarray(z) > 0).all():
        raise GeometryError("point behind camera (z <= 0)")
    pix = project_camera_points(k, pc)
    if pc.ndim == 1:
        return pix, float(z)
    return pix, z


# ------------------------------------------------------------ calibration file

@dataclass(frozen=True)
class SensorCalibration:
    """Everything the pipeline consumes from the calibration file.

    ``extrinsic_direction`` records how the transform was written in the
    file; :attr:`lidar_to_camera` always gives the direction needed for
    colorisation.
    """

    h_rv: Homography
    h_rs: Homography
    intrinsics: CameraIntrinsics
    extrinsic: RigidTransform
    extrinsic_direction: str = "lidar_to_camera"

    def __post_init__(self):
        if self.extrinsic_direction not in ("lidar_to_camera", "camera_to_lidar"):
            raise GeometryError(f"unknown extrinsic direction {self.extrinsic_direction!r}")

    @property
    def lidar_to_camera(self) -> RigidTransform:
        if self.extrinsic_direction == "lidar_to_camera":
            return self.extrinsic
        return self.extrinsic.inverse()

    @property
    def camera_to_lidar(self) -> RigidTransform:
        if self.extrinsic_direction == "camera_to_lidar":
            return self.extrinsic
        return self.extrinsic.inverse()

    def to_dict(self) -> dict:
        k = self.intrinsics
        return {
            "h_rv": self.h_rv.to_list(),
            "h_rs": self.h_rs.to_list(),
            "intrinsics": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy, "skew": k.skew},
            "extrinsic": {
                "direction": self.extrinsic_direction,
                "rotation": [float(v) for v in self.extrinsic.rotation.ravel()],
                "translation": [float(v) for v in self.extrinsic.translation],
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SensorCalibration":
        try:
            ext = d["extrinsic"]
            return cls(
                h_rv=Homography(np.array(d["h_rv"], dtype=float).reshape(3, 3)),
                h_rs=Homography(np.array(d["h_rs"], dtype=float).reshape(3, 3)),
                intrinsics=CameraIntrinsics(**{k: float(v) for k, v in d["intrinsics"].items()}),
                extrinsic=RigidTransform(np.array(ext["rotation"], dtype=float).reshape(3, 3),
                                         np.array(ext["translation"], dtype=float)),
                extrinsic_direction=ext.get("direction", "lidar_to_camera"),
            )
        except (KeyError, TypeError) as exc:
            raise GeometryError(f"malformed calibration: {exc}") from None


def save_calibration(calib: SensorCalibration, path: str | Path) -> None:
    Path(path).write_text(json.dumps(calib.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_calibration(path: str | Path) -> SensorCalibration:
    return SensorCalibration.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
