"""Snapshot mosaic layouts and demosaicing by macro-pixel subsampling."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datacube import CubeKind, Sensor, SpectralCube, load_plane, save_plane, sensor_bands

UNUSED = None

VNIR_BANDS = 24
SWIR_BANDS = 9


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class MosaicLayout:
    """Assignment of filter-cell positions to bands.

    ``cell_to_band[r][c]`` is a band index or ``None`` for an unused position.
    """

    sensor: Sensor
    cell_rows: int
    cell_cols: int
    cell_to_band: tuple[tuple[int | None, ...], ...]
    band_wavelengths: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "sensor", Sensor(self.sensor))
        table = tuple(tuple(None if v is None else int(v) for v in row) for row in self.cell_to_band)
        object.__setattr__(self, "cell_to_band", table)
        object.__setattr__(self, "band_wavelengths", tuple(float(w) for w in self.band_wavelengths))
        if len(table) != self.cell_rows or any(len(row) != self.cell_cols for row in table):
            raise LayoutError("cell_to_band table does not match cell dimensions")
        mapped = [v for row in table for v in row if v is not None]
        n = len(self.band_wavelengths)
        if len(mapped) != len(set(mapped)):
            raise LayoutError("duplicate band assignment in layout")
        if sorted(mapped) != list(range(n)):
            raise LayoutError(f"layout must map every band in [0, {n}) exactly once")
        if self.cell_rows * self.cell_cols < n:
            raise LayoutError("more bands than cell positions")

    @property
    def n_bands(self) -> int:
        return len(self.band_wavelengths)

    def positions(self) -> list[tuple[int, int]]:
        """Cell position of each band, indexed by band."""
        pos = [(0, 0)] * self.n_bands
        for r, row in enumerate(self.cell_to_band):
            for c, b in enumerate(row):
                if b is not None:
                    pos[b] = (r, c)
        return pos

    def to_dict(self) -> dict:
        return {
            "sensor": self.sensor.value,
            "cell_rows": self.cell_rows,
            "cell_cols": self.cell_cols,
            "cell_to_band": [list(row) for row in self.cell_to_band],
            "wavelengths": list(self.band_wavelengths),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MosaicLayout":
        try:
            return cls(Sensor(d["sensor"]), int(d["cell_rows"]), int(d["cell_cols"]),
                       d["cell_to_band"], d["wavelengths"])
        except KeyError as exc:
            raise LayoutError(f"layout missing {exc.args[0]!r}") from None


def default_layout(sensor: Sensor | str, unused: tuple[int, int] = (4, 4)) -> MosaicLayout:
    """Evenly spaced placeholder layouts; real sensors need vendor layout files.

    VNIR: 24 bands on a 5x5 cell over 660-900 nm with ``unused`` left empty.
    SWIR: 9 bands on a 3x3 cell over 1100-1700 nm.
    """
    sensor = Sensor(sensor)
    if sensor is Sensor.VNIR:
        rows = cols = 5
        wl = np.linspace(660.0, 900.0, VNIR_BANDS)
    elif sensor is Sensor.SWIR:
        rows = cols = 3
        wl = np.linspace(1100.0, 1700.0, SWIR_BANDS)
        unused = None
    else:
        raise LayoutError("RGB frames are not mosaiced")
    table, b = [], 0
    for r in range(rows):
        row = []
        for c in range(cols):
            if unused is not None and (r, c) == tuple(unused):
                row.append(UNUSED)
            else:
                row.append(b)
                b += 1
        table.append(row)
    return MosaicLayout(sensor, rows, cols, table, [float(w) for w in wl])


def save_layout(layout: MosaicLayout, path: str | Path) -> None:
    Path(path).write_text(json.dumps(layout.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_layout(path: str | Path) -> MosaicLayout:
    return MosaicLayout.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def demosaic(frame: np.ndarray, layout: MosaicLayout, frame_id: str = "",
             timestamp: float | None = None) -> SpectralCube:
    """Split a raw mosaic frame into a ``(H/rows) x (W/cols) x bands`` cube.

    Each output sample is copied from exactly one sensor pixel; no
    interpolation takes place.
    """
    frame = np.asarray(frame)
    if frame.ndim != 2:
        raise ValueError("mosaic frame must be 2-D")
    h, w = frame.shape
    if h % layout.cell_rows or w % layout.cell_cols:
        raise LayoutError(
            f"frame {w}x{h} not divisible by {layout.cell_cols}x{layout.cell_rows} cell"
        )
    planes = np.empty((layout.n_bands, h // layout.cell_rows, w // layout.cell_cols), np.float32)
    for b, (r, c) in enumerate(layout.positions()):
        planes[b] = frame[r::layout.cell_rows, c::layout.cell_cols]
    return SpectralCube(planes, tuple(sensor_bands(layout.sensor, layout.band_wavelengths)),
                        kind=CubeKind.RAW, frame_id=frame_id, timestamp=timestamp)


def mosaic(cube: SpectralCube, layout: MosaicLayout, fill: float = 0.0) -> np.ndarray:
    """Inverse of :func:`demosaic`; unused cell positions take ``fill``."""
    if cube.n_bands != layout.n_bands:
        raise LayoutError(f"cube has {cube.n_bands} bands, layout {layout.n_bands}")
    frame = np.full((cube.height * layout.cell_rows, cube.width * layout.cell_cols), fill, np.float32)
    for b, (r, c) in enumerate(layout.positions()):
        frame[r::layout.cell_rows, c::layout.cell_cols] = cube.planes[b]
    return frame


def save_frame(frame: np.ndarray, path: str | Path, sensor: Sensor | str,
               timestamp: float | None = None) -> Path:
    return save_plane(np.asarray(frame, np.float32), path, "mosaic-frame",
                      sensor=Sensor(sensor).value,
                      timestamp="none" if timestamp is None else repr(float(timestamp)))


def load_frame(path: str | Path) -> np.ndarray:
    data, _ = load_plane(path, "mosaic-frame")
    return data
