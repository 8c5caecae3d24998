import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from hyperfuel.geometry import (
    CameraIntrinsics,
    GeometryError,
    Homography,
    RigidTransform,
    SensorCalibration,
    apply_homography,
    load_calibration,
    project_point,
    save_calibration,
    transform_point,
    unproject_pixel,
)


def test_apply_homography_examples():
    assert np.allclose(apply_homography(Homography.identity(), (10, 20)), (10, 20))
    assert np.allclose(apply_homography(Homography.translation(2, -3), (0, 0)), (2, -3))
    assert np.allclose(apply_homography(Homography(np.diag([2.0, 2.0, 1.0])), (5, 7)), (10, 14))


def test_homography_normalised_and_degenerate():
    h = Homography(np.diag([4.0, 4.0, 2.0]))
    assert h.h[2, 2] == 1.0 and h.h[0, 0] == 2.0
    with pytest.raises(GeometryError):
        Homography(np.zeros((3, 3)))


def test_apply_homography_at_infinity():
    h = Homography([[1, 0, 0], [0, 1, 0], [1, 0, 1]])
    with pytest.raises(GeometryError):
        apply_homography(h, (-1.0, 0.0))


def test_homography_inverse_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(50):
        m = np.eye(3) + 0.1 * rng.standard_normal((3, 3))
        h = Homography(m)
        p = rng.uniform(-50, 50, size=(20, 2))
        back = apply_homography(h.inverse(), apply_homography(h, p))
        assert np.abs(back - p).max() < 1e-9


def test_unproject_examples():
    k_id = CameraIntrinsics(1, 1, 0, 0)
    assert np.allclose(unproject_pixel(k_id, (0, 0), 5), (0, 0, 5))
    k = CameraIntrinsics(100, 100, 50, 50)
    assert np.allclose(unproject_pixel(k, (50, 50), 2), (0, 0, 2))
    # z * K^-1 (150, 50, 1): x = 2 * (150 - 50) / 100 = 2
    assert np.allclose(unproject_pixel(k, (150, 50), 2), (2, 0, 2), atol=1e-12)
    with pytest.raises(GeometryError):
        unproject_pixel(k, (0, 0), 0.0)


def test_transform_point_examples():
    assert np.allclose(transform_point(RigidTransform.identity(), (1, 2, 3)), (1, 2, 3))
    assert np.allclose(transform_point(RigidTransform(np.eye(3), (1, 0, 0)), (0, 0, 5)), (1, 0, 5))
    rz = Rotation.from_euler("z", 90, degrees=True).as_matrix()
    assert np.allclose(transform_point(RigidTransform(rz, (0, 0, 0)), (1, 0, 0)), (0, 1, 0))


def test_rigid_transform_validation():
    with pytest.raises(GeometryError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), (0, 0, 0))
    with pytest.raises(GeometryError):
        RigidTransform(np.eye(3) * 1.01, (0, 0, 0))


def test_rigidity_preserves_distances():
    rng = np.random.default_rng(5)
    t = RigidTransform(Rotation.random(random_state=1).as_matrix(), rng.normal(size=3))
    p = rng.normal(size=(30, 3)) * 10
    q = transform_point(t, p)
    dp = np.linalg.norm(p[:, None] - p[None], axis=-1)
    dq = np.linalg.norm(q[:, None] - q[None], axis=-1)
    assert np.abs(dp - dq).max() < 1e-9


def test_project_point_examples():
    pix, depth = project_point(CameraIntrinsics(1, 1, 0, 0), RigidTransform.identity(), (0, 0, 4))
    assert np.allclose(pix, (0, 0)) and depth == 4
    with pytest.raises(GeometryError):
        project_point(CameraIntrinsics(1, 1, 0, 0), RigidTransform.identity(), (0, 0, -1))


def test_project_unproject_round_trip_single():
    k = CameraIntrinsics(500, 480, 320, 240, skew=0.5)
    cam_to_lidar = RigidTransform(Rotation.from_euler("xyz", [10, -20, 35], degrees=True).as_matrix(),
                                  (0.3, -0.1, 0.2))
    p = transform_point(cam_to_lidar, unproject_pixel(k, (123.25, 77.5), 7.0))
    pix, depth = project_point(k, cam_to_lidar.inverse(), p)
    assert np.abs(pix - (123.25, 77.5)).max() < 1e-9 and abs(depth - 7.0) < 1e-9


def test_calibration_file_round_trip(tmp_path):
    ext = RigidTransform(Rotation.from_euler("z", 30, degrees=True).as_matrix(), (1, 2, 3))
    c = SensorCalibration(Homography.translation(1, 2), Homography.affine(2, 2, 0, 0),
                          CameraIntrinsics(10, 11, 5, 6), ext, "camera_to_lidar")
    save_calibration(c, tmp_path / "c.json")
    back = load_calibration(tmp_path / "c.json")
    assert back.h_rv == c.h_rv and back.h_rs == c.h_rs and back.intrinsics == c.intrinsics
    assert np.allclose(back.lidar_to_camera.as_matrix(), np.linalg.inv(ext.as_matrix()))
    assert back.camera_to_lidar == ext
