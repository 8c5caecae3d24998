import numpy as np
import pytest

from hyperfuel.fusion import (
    FusedCloud,
    FusionError,
    PointCloud,
    PoseStamped,
    accumulate,
    colorize_cloud,
    nearest_in_time,
    read_cloud_ply,
    read_fused_ply,
    read_trajectory,
    voxel_downsample,
    write_cloud_ply,
    write_fused_ply,
    write_trajectory,
)
from hyperfuel.geometry import CameraIntrinsics, RigidTransform, transform_point, unproject_pixel
from hyperfuel.spectral import DEFAULT_PALETTE, IndexKind, IndexMap, RiskClass, classify_risk
from scipy.spatial.transform import Rotation

K_ID = CameraIntrinsics(1, 1, 0, 0)


def maps(values):
    m = IndexMap(np.asarray(values, float), IndexKind.MOISTURE)
    return classify_risk(m), m


def test_axis_point_samples_origin_pixel():
    risk, m = maps([[0.1, 0.9], [0.9, 0.9]])
    fc = colorize_cloud(PointCloud([[0, 0, 4]]), risk, m, K_ID, RigidTransform.identity())
    assert fc.risk[0] == RiskClass.HIGH and fc.moisture[0] == np.float32(0.1)
    assert tuple(fc.color[0]) == DEFAULT_PALETTE[RiskClass.HIGH]


def test_point_behind_camera_kept_unknown():
    risk, m = maps([[0.6]])
    pts = [[0, 0, -1], [0, 0, 1]]
    fc = colorize_cloud(PointCloud(pts), risk, m, K_ID, RigidTransform.identity())
    assert np.array_equal(fc.points, pts)
    assert fc.risk[0] == RiskClass.UNKNOWN and np.isnan(fc.moisture[0])
    assert fc.risk[1] == RiskClass.LOW


def test_half_high_half_low_plane():
    w, h = 40, 30
    values = np.where(np.arange(w)[None, :] < w // 2, 0.05, 0.8) * np.ones((h, 1))
    risk, m = maps(values)
    k = CameraIntrinsics(30, 30, (w - 1) / 2, (h - 1) / 2)
    ext = RigidTransform(Rotation.from_euler("y", 5, degrees=True).as_matrix(), [0.1, 0, 0])
    # points unprojected from pixel centres at 3 m, expressed in the LiDAR frame
    uu, vv = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    pc = unproject_pixel(k, np.stack([uu.ravel(), vv.ravel()], 1), 3.0)
    pl = transform_point(ext.inverse(), pc)
    fc = colorize_cloud(PointCloud(pl), risk, m, k, ext)
    expected = np.where(uu.ravel() < w // 2, RiskClass.HIGH, RiskClass.LOW)
    assert np.array_equal(fc.risk, expected)
    assert np.array_equal(fc.points, pl)


def test_origin_offset_and_dims_check():
    risk, m = maps([[0.1, 0.9]])
    k = CameraIntrinsics(1, 1, 0, 0)
    # pixel (5, 3) maps into the crop at column 5 - 4 = 1
    fc = colorize_cloud(PointCloud([[5, 3, 1]]), risk, m, k, RigidTransform.identity(), origin=(4, 3))
    assert fc.risk[0] == RiskClass.LOW
    with pytest.raises(FusionError):
        colorize_cloud(PointCloud([[0, 0, 1]]), risk, m, k, RigidTransform.identity(), image_dims=(3, 1))


def test_colorize_idempotent():
    rng = np.random.default_rng(0)
    risk, m = maps(rng.random((10, 12)))
    pts = rng.uniform(-2, 2, (200, 3)) + [0, 0, 3]
    k = CameraIntrinsics(5, 5, 6, 5)
    a = colorize_cloud(PointCloud(pts), risk, m, k, RigidTransform.identity())
    b = colorize_cloud(PointCloud(pts), risk, m, k, RigidTransform.identity())
    assert np.array_equal(a.risk, b.risk) and np.array_equal(a.moisture, b.moisture, equal_nan=True)


def _fc(points, risk, t=None):
    n = len(points)
    return FusedCloud(points, np.zeros((n, 3)), np.full(n, 0.5), risk, t)


def test_accumulate_examples():
    one = _fc([[1.0, 2.0, 3.0]], [1], 0.0)
    out, dropped = accumulate([one], [PoseStamped(RigidTransform.identity(), 0.0)])
    assert dropped == 0 and np.array_equal(out.points, one.points) and out.risk[0] == 1
    a, b = _fc([[0.0, 0, 0]], [0], 1.0), _fc([[0.0, 0, 0]], [0], 2.0)
    poses = [PoseStamped(RigidTransform.identity(), 1.0), PoseStamped(RigidTransform(np.eye(3), [1, 0, 0]), 2.0)]
    out, _ = accumulate([a, b], poses)
    assert np.allclose(out.points, [[0, 0, 0], [1, 0, 0]])


def test_accumulate_drops_cloud_without_pose():
    a = _fc([[0.0, 0, 0]], [0], 1.0)
    out, dropped = accumulate([a], [PoseStamped(RigidTransform.identity(), 1.2)], max_skew=0.05)
    assert dropped == 1 and len(out) == 0


def test_voxel_keeps_highest_risk():
    c = _fc([[0.01, 0.01, 0.01], [0.01, 0.01, 0.01]], [RiskClass.LOW, RiskClass.HIGH])
    out = voxel_downsample(c, 0.05)
    assert len(out) == 1 and out.risk[0] == RiskClass.HIGH
    c = _fc([[0.01, 0, 0], [0.02, 0, 0], [1, 0, 0]], [RiskClass.UNKNOWN, RiskClass.MEDIUM, RiskClass.UNKNOWN])
    out = voxel_downsample(c, 0.05)
    assert list(out.risk) == [RiskClass.MEDIUM, RiskClass.UNKNOWN]


def test_nearest_in_time():
    assert nearest_in_time([0.0, 1.0, 2.0], 1.2, 0.25) == 1
    assert nearest_in_time([0.0, 1.0], 0.5, 0.25) is None
    assert nearest_in_time([0.0, 1.0], 0.5, 0.5) == 0


@pytest.mark.parametrize("binary", [True, False])
def test_ply_round_trips(tmp_path, binary):
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(50, 3))
    risk = rng.choice([0, 1, 2, 255], 50).astype(np.uint8)
    moist = rng.random(50).astype(np.float32)
    moist[::7] = np.nan
    fc = FusedCloud(pts, rng.integers(0, 256, (50, 3)), moist, risk, 3.25)
    write_fused_ply(fc, tmp_path / "f.ply", binary=binary)
    back = read_fused_ply(tmp_path / "f.ply")
    assert np.array_equal(back.points, pts) and np.array_equal(back.risk, risk)
    assert np.array_equal(back.moisture, moist, equal_nan=True) and back.timestamp == 3.25
    assert np.array_equal(back.color, fc.color)
    pc = PointCloud(pts, rng.random(50), 1.5)
    write_cloud_ply(pc, tmp_path / "c.ply", binary=binary)
    back = read_cloud_ply(tmp_path / "c.ply")
    assert np.array_equal(back.points, pts) and back.timestamp == 1.5


def test_trajectory_round_trip(tmp_path):
    rot = Rotation.from_euler("xyz", [5, 10, 15], degrees=True).as_matrix()
    poses = [PoseStamped(RigidTransform(rot, [1, 2, 3]), 0.5), PoseStamped(RigidTransform.identity(), 1.0)]
    write_trajectory(poses, tmp_path / "p.txt")
    back = read_trajectory(tmp_path / "p.txt")
    assert [p.timestamp for p in back] == [0.5, 1.0]
    assert np.allclose(back[0].pose.rotation, rot, atol=1e-12)
    (tmp_path / "bad.txt").write_text("1 2 3\n")
    with pytest.raises(FusionError):
        read_trajectory(tmp_path / "bad.txt")
