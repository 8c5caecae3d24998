import json

import numpy as np
import pytest

from hyperfuel.calibration import load_signals
from hyperfuel.datacube import load_cube, load_plane
from hyperfuel.pipeline import load_manifest, run_pipeline
from hyperfuel.spectral import RiskClass
from hyperfuel.synth import SynthError, SyntheticScene, make_rig, moisture_field, render_session


def test_constant_scene_is_low_everywhere(tmp_path):
    render_session(SyntheticScene("constant", constant=0.6), 1, tmp_path, dims=(40, 30))
    risk, _ = load_plane(tmp_path / "ground_truth" / "risk_0000")
    assert (risk == RiskClass.LOW).all()


def test_ramp_bands_at_threshold_columns(tmp_path):
    render_session(SyntheticScene("ramp"), 2, tmp_path, dims=(120, 40))
    truth = json.loads((tmp_path / "ground_truth" / "truth.json").read_text())
    for f in truth["frames"]:
        risk, _ = load_plane(tmp_path / "ground_truth" / f"risk_{f['frame_id']}")
        row = risk[20]
        medium = np.flatnonzero(row == RiskClass.MEDIUM)
        low = np.flatnonzero(row == RiskClass.LOW)
        assert medium[0] == int(np.ceil(f["medium_start_column"]))
        assert low[0] == int(np.ceil(f["low_start_column"]))


def test_ramp_stays_in_unit_interval_on_every_sensor_grid():
    rig = make_rig(200, 150, "affine")
    scene = SyntheticScene("ramp")
    lo, hi = rig.column_span()
    for frame in (0, 4):
        m = moisture_field(scene, rig, 5, frame, np.array([lo, hi]), np.array([0.0, 149.0]))
        assert m.min() >= -1e-12 and m.max() <= 1 + 1e-12


def test_raw_counts_recover_designed_reflectance_exactly(tmp_path):
    man = render_session(SyntheticScene("checker"), 1, tmp_path, dims=(30, 20), registration="identity")
    rgb = load_cube(tmp_path / "frames" / "rgb_0000")
    sig = load_signals(tmp_path / "signals" / "rgb.json")
    refl = (rgb.planes.astype(np.float64) - sig.dark[:, None, None]) / (sig.reference - sig.dark)[:, None, None]
    q = refl / 2.0 ** -20
    assert np.array_equal(q, np.round(q))
    assert load_manifest(man).streams["rgb"][0].timestamp == 1.0


def test_errors(tmp_path):
    with pytest.raises(SynthError):
        SyntheticScene("spiral")
    with pytest.raises(SynthError):
        render_session(SyntheticScene(), 0, tmp_path)
    with pytest.raises(SynthError):
        make_rig(10, 10, "projective")


@pytest.mark.parametrize("registration,tol", [("identity", 1e-9), ("translation", 1e-5)])
def test_pipeline_recovers_moisture(tmp_path, registration, tol):
    man = render_session(SyntheticScene("ramp"), 2, tmp_path / "s", dims=(64, 48), registration=registration)
    run_pipeline(load_manifest(man), tmp_path / "o", stages=["demosaic", "calibrate", "register", "index"])
    truth = json.loads((tmp_path / "s" / "ground_truth" / "truth.json").read_text())
    for f in truth["frames"]:
        fid = f["frame_id"]
        crop = json.loads((tmp_path / "o" / "frames" / fid / "registered.crop.json").read_text())
        assert [crop[k] for k in ("x0", "y0", "width", "height")] == f["expected_crop"]
        got, _ = load_plane(tmp_path / "o" / "frames" / fid / "moisture")
        gt, _ = load_plane(tmp_path / "s" / "ground_truth" / f"moisture_{fid}")
        x0, y0, w, h = f["expected_crop"]
        err = np.abs(got.astype(float) - gt[y0:y0 + h, x0:x0 + w])
        assert err.max() <= tol


def test_noise_degrades_rmse_monotonically(tmp_path):
    rmse = []
    for sigma in (0.0, 0.001, 0.01):
        d = tmp_path / f"n{sigma}"
        man = render_session(SyntheticScene("ramp", noise=sigma, seed=3), 1, d / "s", dims=(64, 48))
        run_pipeline(load_manifest(man), d / "o", stages=["demosaic", "calibrate", "register", "index"])
        got, _ = load_plane(d / "o" / "frames" / "0000" / "moisture")
        gt, _ = load_plane(d / "s" / "ground_truth" / "moisture_0000")
        rmse.append(float(np.sqrt(np.mean((got.astype(float) - gt) ** 2))))
    assert rmse[0] < rmse[1] < rmse[2]
