import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from PIL import Image

from hyperfuel.datacube import CubeKind, Sensor, select_band
from hyperfuel.spectral import (
    DEFAULT_PALETTE,
    BandSelection,
    IndexKind,
    IndexMap,
    RiskClass,
    SpectralError,
    classify_risk,
    classify_values,
    load_index,
    load_risk,
    moisture_index,
    ndmi,
    ndvi,
    ndwi,
    normalized_difference,
    save_index,
    save_index_png,
    save_risk,
)

from conftest import make_cube, registered_like

SEL = BandSelection()


def cube_with(**planes):
    """36-band reflectance cube with selected bands set to constants."""
    data = np.full((36, 2, 2), 0.25, np.float32)
    probe = registered_like(data)
    centers = {"green": SEL.green, "red": SEL.red, "nir": SEL.nir, "swir": SEL.swir,
               "m1300": SEL.moisture_a, "m1119": SEL.moisture_b}
    for name, v in planes.items():
        data[select_band(probe, centers[name], SEL.tolerance)[0]] = v
    return registered_like(data)


def test_band_resolution_defaults():
    c = registered_like(np.zeros((36, 1, 1)))
    wl = c.wavelengths
    assert wl[select_band(c, SEL.green, SEL.tolerance)[0]] == 540.0
    assert wl[select_band(c, SEL.red, SEL.tolerance)[0]] == 660.0
    assert abs(wl[select_band(c, SEL.nir, SEL.tolerance)[0]] - 860) < 6
    assert wl[select_band(c, SEL.swir, SEL.tolerance)[0]] == 1625.0
    assert wl[select_band(c, SEL.moisture_a, SEL.tolerance)[0]] == 1325.0
    assert wl[select_band(c, SEL.moisture_b, SEL.tolerance)[0]] == 1100.0


def test_normalized_difference_examples():
    one, zero = np.ones((2, 2)), np.zeros((2, 2))
    assert (normalized_difference(one * 0.3, one * 0.3) == 0).all()
    assert (normalized_difference(one, zero) == 1).all()
    assert (normalized_difference(zero, one) == -1).all()
    assert normalized_difference(np.array([[0.6]]), np.array([[0.4]]))[0, 0] == pytest.approx(0.2, abs=1e-15)
    nan = normalized_difference(np.array([[0.0, np.nan, 1e-13]]), np.array([[0.0, 1.0, 0.0]]))
    assert np.isnan(nan).all()
    with pytest.raises(SpectralError):
        normalized_difference(np.zeros((2, 2)), np.zeros((2, 3)))


def test_index_examples():
    assert (ndwi(cube_with(green=0.3, nir=0.3)).values == 0).all()
    assert ndwi(cube_with(green=0.1, nir=0.5)).values[0, 0] == pytest.approx(-2 / 3, abs=1e-7)
    # water pixel: (0.3 - 0.05) / 0.35
    assert ndwi(cube_with(green=0.3, nir=0.05)).values[0, 0] == pytest.approx(0.7142857142857143, abs=1e-7)
    assert ndvi(cube_with(nir=0.5, red=0.1)).values[0, 0] == pytest.approx(2 / 3, abs=1e-7)
    assert ndmi(cube_with(nir=0.4, swir=0.2)).values[0, 0] == pytest.approx(1 / 3, abs=1e-7)
    assert moisture_index(cube_with(m1300=0.6, m1119=0.4)).values[0, 0] == pytest.approx(0.2, abs=1e-7)
    assert (moisture_index(cube_with(m1300=0.3, m1119=0.3)).values == 0).all()


def test_index_needs_reflectance_and_resolvable_band():
    raw = registered_like(np.ones((36, 1, 1)), kind=CubeKind.RAW)
    with pytest.raises(SpectralError):
        ndvi(raw)
    swir_only = make_cube(np.ones((9, 1, 1)), Sensor.SWIR)
    with pytest.raises(LookupError):
        ndvi(swir_only)


def test_moisture_on_linear_spectral_ramp():
    # reflectance linear in wavelength with a per-pixel slope: closed form at 1325 / 1100
    wl = registered_like(np.zeros((36, 1, 1))).wavelengths
    k = np.linspace(1e-4, 4e-4, 12).reshape(3, 4)
    planes = 0.05 + k[None] * (wl[:, None, None] - 400.0)
    planes = planes.astype(np.float32)
    got = moisture_index(registered_like(planes)).values
    a, b = planes[27 + 3].astype(np.float64), planes[27].astype(np.float64)
    assert np.abs(got - (a - b) / (a + b)).max() <= 1e-12
    exact = (k * 925.0 - k * 700.0) / (0.1 + k * (925.0 + 700.0))
    assert np.abs(got - exact).max() < 1e-6  # float32 storage of the planes


def test_classify_examples():
    v = np.array([[0.10, 0.35, 0.60, 0.20, 0.50, -0.2, np.nan, 1.7]])
    got = classify_risk(IndexMap(v, IndexKind.MOISTURE)).classes[0]
    H, M, L, U = RiskClass.HIGH, RiskClass.MEDIUM, RiskClass.LOW, RiskClass.UNKNOWN
    assert list(got) == [H, M, L, M, L, H, U, L]
    with pytest.raises(SpectralError):
        classify_risk(IndexMap(v, IndexKind.NDVI))


def test_classify_monotone():
    v = np.linspace(-0.5, 1.5, 2001)
    sev = {0: 3, 1: 2, 2: 1}
    s = [sev[c] for c in classify_values(v)]
    assert all(a >= b for a, b in zip(s, s[1:]))


@settings(max_examples=60, deadline=None)
@given(a=hnp.arrays(np.float64, (4, 4), elements=st.floats(0, 2)),
       b=hnp.arrays(np.float64, (4, 4), elements=st.floats(0, 2)),
       c=st.floats(0.01, 100))
def test_index_properties(a, b, c):
    nd = normalized_difference(a, b)
    ok = ~np.isnan(nd)
    assert (np.abs(nd[ok]) <= 1).all()
    assert np.array_equal(np.isnan(nd), np.isnan(normalized_difference(b, a)))
    assert np.array_equal(nd[ok], -normalized_difference(b, a)[ok])
    big = (a + b) > 1e-9
    scaled = normalized_difference(a * c, b * c)
    assert np.allclose(scaled[big], nd[big], atol=1e-12)


def test_risk_unknown_exactly_where_nan():
    v = np.random.default_rng(0).random((20, 20))
    v[v < 0.1] = np.nan
    r = classify_risk(IndexMap(v, IndexKind.MOISTURE))
    assert np.array_equal(r.classes == RiskClass.UNKNOWN, np.isnan(v))


def test_exports(tmp_path):
    v = np.array([[0.1, 0.35], [np.nan, 0.9]])
    m = IndexMap(v, IndexKind.MOISTURE, "0003", 2.5)
    save_index(m, tmp_path / "m")
    back = load_index(tmp_path / "m")
    assert back.index_kind is IndexKind.MOISTURE and back.frame_id == "0003" and back.timestamp == 2.5
    assert np.array_equal(back.values, v.astype(np.float32), equal_nan=True)
    save_index_png(m, tmp_path / "m.png")
    assert np.array_equal(np.asarray(Image.open(tmp_path / "m.png")), [[26, 89], [0, 230]])
    r = classify_risk(m)
    save_risk(r, tmp_path / "r")
    rgb = np.asarray(Image.open(tmp_path / "r.png"))
    assert tuple(rgb[0, 0]) == DEFAULT_PALETTE[RiskClass.HIGH]
    assert tuple(rgb[1, 0]) == DEFAULT_PALETTE[RiskClass.UNKNOWN]
    counts = json.loads((tmp_path / "r.counts.json").read_text())["counts"]
    assert counts == {"high": 1, "medium": 1, "low": 1, "unknown": 1}
    assert np.array_equal(load_risk(tmp_path / "r").classes, r.classes)
