"""Hyperspectral cube data model and the on-disk header + flat binary format.

A cube lives on disk as two files: a text header (``<stem>.hdr``) of
``key: value`` lines and a companion ``<stem>.bin`` holding little-endian
samples in band-sequential order. The same header scheme is reused for
single-plane products (mosaic frames, validity masks, index maps, risk
class maps); those carry no wavelength list.

In memory a :class:`SpectralCube` keeps its samples band-sequential,
``planes[b, y, x]``, and exposes the ``(height, width, bands)`` view as
:attr:`SpectralCube.data`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

HEADER_MAGIC = "hyperfuel cube"

VNIR_RANGE = (660.0, 900.0)
SWIR_RANGE = (1100.0, 1700.0)


class CubeFormatError(ValueError):
    """Malformed, inconsistent or missing cube files."""


class BandLookupError(LookupError):
    """No band center lies within the requested tolerance."""


class Sensor(str, enum.Enum):
    RGB = "RGB"
    VNIR = "VNIR"
    SWIR = "SWIR"


class CubeKind(str, enum.Enum):
    RAW = "raw-radiance"
    REFLECTANCE = "reflectance"


_SENSOR_RANGES = {Sensor.VNIR: VNIR_RANGE, Sensor.SWIR: SWIR_RANGE}


@dataclass(frozen=True)
class BandInfo:
    center_wavelength: float
    source_sensor: Sensor
    band_index_in_sensor: int

    def __post_init__(self):
        object.__setattr__(self, "source_sensor", Sensor(self.source_sensor))
        if not (math.isfinite(self.center_wavelength) and self.center_wavelength > 0):
            raise ValueError(f"band center must be positive, got {self.center_wavelength}")
        if self.band_index_in_sensor < 0:
            raise ValueError("band_index_in_sensor must be non-negative")
        rng = _SENSOR_RANGES.get(self.source_sensor)
        if rng is not None and not (rng[0] <= self.center_wavelength <= rng[1]):
            raise ValueError(
                f"{self.source_sensor.value} band at {self.center_wavelength} nm "
                f"outside sensor range {rng[0]:g}-{rng[1]:g} nm"
            )


def sensor_bands(sensor: Sensor | str, wavelengths: Iterable[float]) -> list[BandInfo]:
    """Build consecutive BandInfo entries for one sensor."""
    return [BandInfo(float(w), Sensor(sensor), i) for i, w in enumerate(wavelengths)]


def _check_band_order(bands: Sequence[BandInfo]) -> None:
    if not bands:
        raise CubeFormatError("band list is empty")
    last: dict[Sensor, BandInfo] = {}
    for band in bands:
        prev = last.get(band.source_sensor)
        if prev is not None:
            if band.band_index_in_sensor <= prev.band_index_in_sensor:
                raise CubeFormatError(
                    f"{band.source_sensor.value} band indices not increasing "
                    f"({prev.band_index_in_sensor} then {band.band_index_in_sensor})"
                )
            if band.center_wavelength <= prev.center_wavelength:
                raise CubeFormatError(
                    f"{band.source_sensor.value} band centers not strictly increasing "
                    f"({prev.center_wavelength} then {band.center_wavelength})"
                )
        last[band.source_sensor] = band


@dataclass(frozen=True, eq=False)
class SpectralCube:
    """Immutable width x height x bands sample array with band metadata.

    ``planes`` is stored band-sequential with shape ``(bands, height, width)``
    as float32 and is made read-only on construction.
    """

    planes: np.ndarray
    bands: tuple[BandInfo, ...]
    kind: CubeKind = CubeKind.RAW
    frame_id: str = ""
    timestamp: float | None = None

    def __post_init__(self):
        # float32 in memory too, so a cube equals its on-disk form exactly
        planes = np.asarray(self.planes, dtype=np.float32)
        if planes.ndim != 3:
            raise ValueError(f"planes must be 3-D (bands, height, width), got {planes.shape}")
        bands = tuple(self.bands)
        if planes.shape[0] != len(bands):
            raise ValueError(f"{planes.shape[0]} planes but {len(bands)} bands")
        _check_band_order(bands)
        kind = CubeKind(self.kind)
        if planes.flags.writeable:
            planes = planes.view()
            planes.flags.writeable = False
        object.__setattr__(self, "planes", planes)
        object.__setattr__(self, "bands", bands)
        object.__setattr__(self, "kind", kind)
        if kind is CubeKind.REFLECTANCE and np.isinf(planes).any():
            raise ValueError("reflectance cube contains infinite samples")

    @classmethod
    def from_hwb(cls, data: np.ndarray, bands: Sequence[BandInfo], **kwargs) -> "SpectralCube":
        """Construct from a ``(height, width, bands)`` array."""
        data = np.asarray(data)
        return cls(np.ascontiguousarray(np.moveaxis(data, 2, 0)), tuple(bands), **kwargs)

    @property
    def data(self) -> np.ndarray:
        """``(height, width, bands)`` view of the samples."""
        return self.planes.transpose(1, 2, 0)

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def n_bands(self) -> int:
        return self.planes.shape[0]

    @property
    def wavelengths(self) -> np.ndarray:
        return np.array([b.center_wavelength for b in self.bands])

    def replace(self, **changes) -> "SpectralCube":
        fields_ = dict(planes=self.planes, bands=self.bands, kind=self.kind,
                       frame_id=self.frame_id, timestamp=self.timestamp)
        fields_.update(changes)
        return SpectralCube(**fields_)

    def sensor_slice(self, sensor: Sensor | str) -> "SpectralCube":
        sensor = Sensor(sensor)
        idx = [i for i, b in enumerate(self.bands) if b.source_sensor is sensor]
        if not idx:
            raise KeyError(f"cube holds no {sensor.value} bands")
        return self.replace(planes=self.planes[idx], bands=tuple(self.bands[i] for i in idx))

    def __eq__(self, other):
        if not isinstance(other, SpectralCube):
            return NotImplemented
        return (
            self.bands == other.bands
            and self.kind == other.kind
            and self.frame_id == other.frame_id
            and self.timestamp == other.timestamp
            and self.planes.shape == other.planes.shape
            and self.planes.dtype == other.planes.dtype
            and self.planes.tobytes() == other.planes.tobytes()
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ValidityMask:
    valid: np.ndarray

    def __post_init__(self):
        valid = np.asarray(self.valid, dtype=bool)
        if valid.ndim != 2:
            raise ValueError("validity mask must be 2-D")
        valid = valid.view()
        valid.flags.writeable = False
        object.__setattr__(self, "valid", valid)

    @property
    def width(self) -> int:
        return self.valid.shape[1]

    @property
    def height(self) -> int:
        return self.valid.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ValidityMask):
            return NotImplemented
        return self.valid.shape == other.valid.shape and bool((self.valid == other.valid).all())

    __hash__ = None


def select_band(cube: SpectralCube, wavelength: float, tolerance: float) -> tuple[int, np.ndarray]:
    """Return ``(band_index, plane)`` for the band nearest ``wavelength``.

    Equidistant centers resolve to the lower band index. The plane is a
    ``(height, width)`` view into the cube.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    dist = np.abs(cube.wavelengths - float(wavelength))
    idx = int(np.argmin(dist))  # argmin returns the first minimum
    if dist[idx] > tolerance:
        raise BandLookupError(
            f"no band within {tolerance:g} nm of {wavelength:g} nm "
            f"(nearest {cube.bands[idx].center_wavelength:g} nm)"
        )
    return idx, cube.planes[idx]


# ---------------------------------------------------------------- file format

_DTYPES = {"float32": np.dtype("<f4"), "uint8": np.dtype("u1")}


def header_path(path: str | Path) -> Path:
    """Normalise ``foo``, ``foo.hdr`` or ``foo.bin`` to ``foo.hdr``."""
    path = Path(path)
    if path.suffix in (".hdr", ".bin"):
        return path.with_suffix(".hdr")
    return path.with_name(path.name + ".hdr")


def binary_path(path: str | Path) -> Path:
    return header_path(path).with_suffix(".bin")


def _fmt_list(values) -> str:
    return "[" + ", ".join(values) + "]"


def _parse_list(text: str) -> list[str]:
    text = text.strip()
    if not (text.startswith("[") and text.endswith("]")):
        raise CubeFormatError(f"expected [..] list, got {text!r}")
    body = text[1:-1].strip()
    return [t.strip() for t in body.split(",")] if body else []


def _write_pair(path: Path, header: dict[str, str], payload: np.ndarray) -> None:
    hdr = header_path(path)
    lines = [HEADER_MAGIC] + [f"{k}: {v}" for k, v in header.items()]
    try:
        hdr.parent.mkdir(parents=True, exist_ok=True)
        hdr.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with open(hdr.with_suffix(".bin"), "wb") as fh:
            fh.write(payload.tobytes(order="C"))
    except OSError as exc:
        raise OSError(f"cannot write {hdr}: {exc}") from exc


def read_header(path: str | Path) -> dict[str, str]:
    hdr = header_path(path)
    if not hdr.exists():
        raise FileNotFoundError(f"missing header {hdr}")
    lines = hdr.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != HEADER_MAGIC:
        raise CubeFormatError(f"{hdr} is not a {HEADER_MAGIC!r} header")
    out: dict[str, str] = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise CubeFormatError(f"{hdr}: malformed line {line!r}")
        out[key.strip()] = value.strip()
    return out


def _read_payload(path: str | Path, header: dict[str, str], shape: tuple[int, ...]) -> np.ndarray:
    if header.get("byte order", "little-endian") != "little-endian":
        raise CubeFormatError(f"unsupported byte order {header.get('byte order')!r}")
    if header.get("interleave", "band-sequential") != "band-sequential":
        raise CubeFormatError(f"unsupported interleave {header.get('interleave')!r}")
    dtype_name = header.get("data type", "float32")
    if dtype_name not in _DTYPES:
        raise CubeFormatError(f"unknown sample type {dtype_name!r}")
    dtype = _DTYPES[dtype_name]
    binp = binary_path(path)
    if not binp.exists():
        raise FileNotFoundError(f"missing binary {binp}")
    expected = int(np.prod(shape)) * dtype.itemsize
    actual = binp.stat().st_size
    if actual != expected:
        raise CubeFormatError(
            f"{binp}: size mismatch, header declares {shape} {dtype_name} "
            f"({expected} bytes) but file holds {actual} bytes"
        )
    data = np.fromfile(binp, dtype=dtype).reshape(shape)
    return data.astype(dtype.newbyteorder("="), copy=False)


def _dims(header: dict[str, str]) -> tuple[int, int, int]:
    try:
        return int(header["width"]), int(header["height"]), int(header.get("bands", 1))
    except KeyError as exc:
        raise CubeFormatError(f"header missing {exc.args[0]!r}") from None


def save_cube(cube: SpectralCube, path: str | Path) -> Path:
    """Write ``cube`` as header + float32 band-sequential binary; returns the header path."""
    header = {
        "width": str(cube.width),
        "height": str(cube.height),
        "bands": str(cube.n_bands),
        "kind": cube.kind.value,
        "data type": "float32",
        "byte order": "little-endian",
        "interleave": "band-sequential",
        "frame id": cube.frame_id,
        "timestamp": "none" if cube.timestamp is None else repr(float(cube.timestamp)),
        "wavelengths": _fmt_list(repr(b.center_wavelength) for b in cube.bands),
        "sensors": _fmt_list(b.source_sensor.value for b in cube.bands),
        "sensor band indices": _fmt_list(str(b.band_index_in_sensor) for b in cube.bands),
    }
    payload = np.ascontiguousarray(cube.planes, dtype="<f4")
    _write_pair(Path(path), header, payload)
    return header_path(path)


def load_cube(path: str | Path) -> SpectralCube:
    header = read_header(path)
    try:
        kind = CubeKind(header.get("kind", ""))
    except ValueError:
        raise CubeFormatError(f"{header_path(path)} is not a cube (kind={header.get('kind')!r})") from None
    width, height, n_bands = _dims(header)
    wavelengths = [float(w) for w in _parse_list(header.get("wavelengths", "[]"))]
    if len(wavelengths) != n_bands:
        raise CubeFormatError(f"header lists {len(wavelengths)} wavelengths for {n_bands} bands")
    sensors = _parse_list(header["sensors"]) if "sensors" in header else ["RGB"] * n_bands
    indices = ([int(i) for i in _parse_list(header["sensor band indices"])]
               if "sensor band indices" in header else list(range(n_bands)))
    if not (len(sensors) == len(indices) == n_bands):
        raise CubeFormatError("band metadata lists disagree in length")
    try:
        bands = tuple(BandInfo(w, Sensor(s), i) for w, s, i in zip(wavelengths, sensors, indices))
    except ValueError as exc:
        raise CubeFormatError(str(exc)) from None
    _check_band_order(bands)
    planes = _read_payload(path, header, (n_bands, height, width))
    ts = header.get("timestamp", "none")
    return SpectralCube(
        planes,
        bands,
        kind=kind,
        frame_id=header.get("frame id", ""),
        timestamp=None if ts == "none" else float(ts),
    )


def save_plane(array: np.ndarray, path: str | Path, kind: str, **extra: str) -> Path:
    """Write a single 2-D plane (frame, mask, index map, class map)."""
    array = np.asarray(array)
    if array.ndim != 2:
        raise ValueError("plane must be 2-D")
    if array.dtype == np.uint8 or array.dtype == bool:
        dtype_name, payload = "uint8", array.astype(np.uint8)
    else:
        dtype_name, payload = "float32", array.astype("<f4")
    header = {
        "width": str(array.shape[1]),
        "height": str(array.shape[0]),
        "bands": "1",
        "kind": kind,
        "data type": dtype_name,
        "byte order": "little-endian",
        "interleave": "band-sequential",
    }
    header.update({k.replace("_", " "): str(v) for k, v in extra.items()})
    _write_pair(Path(path), header, np.ascontiguousarray(payload))
    return header_path(path)


def load_plane(path: str | Path, kind: str | None = None) -> tuple[np.ndarray, dict[str, str]]:
    header = read_header(path)
    if kind is not None and header.get("kind") != kind:
        raise CubeFormatError(f"{header_path(path)}: expected kind {kind!r}, found {header.get('kind')!r}")
    width, height, n_bands = _dims(header)
    if n_bands != 1:
        raise CubeFormatError("plane files hold exactly one band")
    return _read_payload(path, header, (height, width)), header


def save_mask(mask: ValidityMask, path: str | Path) -> Path:
    return save_plane(mask.valid.astype(np.uint8), path, "mask")


def load_mask(path: str | Path) -> ValidityMask:
    data, _ = load_plane(path, "mask")
    if not np.isin(data, (0, 1)).all():
        raise CubeFormatError("mask bytes must be 0 or 1")
    return ValidityMask(data.astype(bool))
