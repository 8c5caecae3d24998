"""Warp VNIR and SWIR cubes into the RGB frame and assemble the 36-band cube."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .datacube import (
    Sensor,
    SpectralCube,
    ValidityMask,
    load_cube,
    load_mask,
    save_cube,
    save_mask,
)
from .geometry import GeometryError, Homography
from .mosaic import SWIR_BANDS, VNIR_BANDS

RGB_BANDS = 3
REGISTERED_BANDS = RGB_BANDS + VNIR_BANDS + SWIR_BANDS


class RegistrationError(ValueError):
    pass


@dataclass(frozen=True)
class RegisteredCube:
    cube: SpectralCube
    crop_rect: tuple[int, int, int, int]  # x0, y0, width, height in RGB pixels
    mask: ValidityMask


def warp_cube(src: SpectralCube, h: Homography, out_width: int, out_height: int
              ) -> tuple[SpectralCube, ValidityMask]:
    """Inverse-warp every band of ``src`` through ``h`` with bilinear sampling.

    Output pixel ``q`` samples ``src`` at ``h^-1 q``. A pixel is valid only
    when that preimage lies inside the source grid (all bilinear neighbours
    exist); invalid pixels are NaN in every band.
    """
    try:
        hinv = np.ascontiguousarray(h.inverse().h)
    except (GeometryError, np.linalg.LinAlgError) as exc:
        raise RegistrationError(f"degenerate homography: {exc}") from None
    planes, mask = kernels.warp_bilinear(src.planes, hinv, int(out_height), int(out_width))
    return src.replace(planes=planes), ValidityMask(mask.astype(bool))


def max_valid_rectangle(mask: ValidityMask) -> tuple[int, int, int, int]:
    """Largest axis-aligned rectangle of valid pixels as ``(x0, y0, width, height)``.

    Ties on area go to the smallest ``y0``, then ``x0``, then the wider
    rectangle.
    """
    valid = np.ascontiguousarray(mask.valid, dtype=np.uint8)
    if valid.size == 0:
        raise RegistrationError("empty mask")
    area, x0, y0, w, h = kernels.max_rectangle(valid)
    if area == 0:
        raise RegistrationError("mask holds no valid pixel")
    return int(x0), int(y0), int(w), int(h)


def _check_bands(cube: SpectralCube, sensor: Sensor, n: int) -> None:
    if cube.n_bands != n:
        raise RegistrationError(f"{sensor.value} cube has {cube.n_bands} bands, expected {n}")
    if any(b.source_sensor is not sensor for b in cube.bands):
        raise RegistrationError(f"{sensor.value} cube carries bands from another sensor")


def register(rgb: SpectralCube, vnir: SpectralCube, swir: SpectralCube,
             h_rv: Homography, h_rs: Homography) -> RegisteredCube:
    """Bring VNIR and SWIR into the RGB frame, crop to the jointly valid
    rectangle and stack bands RGB, VNIR, SWIR."""
    _check_bands(rgb, Sensor.RGB, RGB_BANDS)
    _check_bands(vnir, Sensor.VNIR, VNIR_BANDS)
    _check_bands(swir, Sensor.SWIR, SWIR_BANDS)
    if len({rgb.kind, vnir.kind, swir.kind}) != 1:
        raise RegistrationError("sensor cubes differ in kind (raw vs reflectance)")

    w, h = rgb.width, rgb.height
    vnir_w, vnir_mask = warp_cube(vnir, h_rv, w, h)
    swir_w, swir_mask = warp_cube(swir, h_rs, w, h)
    joint = vnir_mask.valid & swir_mask.valid & ~np.isnan(rgb.planes).any(axis=0)
    if not joint.any():
        raise RegistrationError("VNIR and SWIR footprints do not overlap inside the RGB frame")
    x0, y0, cw, ch = max_valid_rectangle(ValidityMask(joint))

    planes = np.empty((REGISTERED_BANDS, ch, cw), np.float32)
    ys, xs = slice(y0, y0 + ch), slice(x0, x0 + cw)
    planes[:RGB_BANDS] = rgb.planes[:, ys, xs]
    planes[RGB_BANDS:RGB_BANDS + VNIR_BANDS] = vnir_w.planes[:, ys, xs]
    planes[RGB_BANDS + VNIR_BANDS:] = swir_w.planes[:, ys, xs]
    cube = SpectralCube(planes, rgb.bands + vnir.bands + swir.bands, kind=rgb.kind,
                        frame_id=rgb.frame_id, timestamp=rgb.timestamp)
    return RegisteredCube(cube, (x0, y0, cw, ch), ValidityMask(np.ones((ch, cw), bool)))


def save_registered(reg: RegisteredCube, stem: str | Path) -> None:
    """``<stem>.hdr/.bin`` cube, ``<stem>.mask.hdr/.bin`` and ``<stem>.crop.json``."""
    stem = Path(stem)
    save_cube(reg.cube, stem)
    save_mask(reg.mask, stem.with_name(stem.name + ".mask"))
    x0, y0, w, h = reg.crop_rect
    stem.with_name(stem.name + ".crop.json").write_text(
        json.dumps({"x0": x0, "y0": y0, "width": w, "height": h}) + "\n", encoding="utf-8")


def load_registered(stem: str | Path) -> RegisteredCube:
    stem = Path(stem)
    if stem.suffix == ".hdr":
        stem = stem.with_suffix("")
    cube = load_cube(stem)
    mask = load_mask(stem.with_name(stem.name + ".mask"))
    crop = json.loads(stem.with_name(stem.name + ".crop.json").read_text(encoding="utf-8"))
    return RegisteredCube(cube, (crop["x0"], crop["y0"], crop["width"], crop["height"]), mask)
