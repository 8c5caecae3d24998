"""Normalized-difference indices and moisture risk classes.

Every index here goes through :func:`normalized_difference`; only the
band pair differs.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .datacube import CubeKind, SpectralCube, load_plane, save_plane, select_band

ZERO_DENOMINATOR = 1e-12


class IndexKind(str, enum.Enum):
    NDWI = "ndwi"
    NDVI = "ndvi"
    NDMI = "ndmi"
    MOISTURE = "moisture"


class RiskClass(enum.IntEnum):
    """Codes double as the PLY ``risk`` byte."""

    HIGH = 0
    MEDIUM = 1
    LOW = 2
    UNKNOWN = 255


# severity order used when several samples compete (voxel merging)
RISK_SEVERITY = {RiskClass.HIGH: 3, RiskClass.MEDIUM: 2, RiskClass.LOW: 1, RiskClass.UNKNOWN: 0}

DEFAULT_PALETTE = {
    RiskClass.HIGH: (214, 40, 40),
    RiskClass.MEDIUM: (247, 170, 0),
    RiskClass.LOW: (46, 139, 87),
    RiskClass.UNKNOWN: (128, 128, 128),
}

# percent thresholds on the clamped moisture index: [0, 20) high, [20, 50) medium, >= 50 low
HIGH_MEDIUM_EDGE = 20.0
MEDIUM_LOW_EDGE = 50.0


class SpectralError(ValueError):
    pass


@dataclass(frozen=True)
class BandSelection:
    """Center wavelengths (nm) used for each index input."""

    green: float = 540.0
    red: float = 660.0
    nir: float = 860.0
    swir: float = 1610.0
    moisture_a: float = 1300.0
    moisture_b: float = 1119.0
    tolerance: float = 30.0

    def __post_init__(self):
        for name in ("green", "red", "nir", "swir", "moisture_a", "moisture_b"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} wavelength must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")

    @classmethod
    def from_dict(cls, d: dict | None) -> "BandSelection":
        return cls(**{k: float(v) for k, v in (d or {}).items()})

    def pair(self, kind: IndexKind) -> tuple[float, float]:
        return {
            IndexKind.NDWI: (self.green, self.nir),
            IndexKind.NDVI: (self.nir, self.red),
            IndexKind.NDMI: (self.nir, self.swir),
            IndexKind.MOISTURE: (self.moisture_a, self.moisture_b),
        }[IndexKind(kind)]


@dataclass(frozen=True, eq=False)
class IndexMap:
    values: np.ndarray
    index_kind: IndexKind
    frame_id: str = ""
    timestamp: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("index map must be 2-D")
        v = v.view()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "index_kind", IndexKind(self.index_kind))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class RiskMap:
    classes: np.ndarray  # uint8 RiskClass codes
    palette: dict = field(default_factory=lambda: dict(DEFAULT_PALETTE))
    frame_id: str = ""
    timestamp: float | None = None

    def __post_init__(self):
        c = np.asarray(self.classes, dtype=np.uint8)
        if c.ndim != 2:
            raise ValueError("risk map must be 2-D")
        c = c.view()
        c.flags.writeable = False
        object.__setattr__(self, "classes", c)

    @property
    def width(self) -> int:
        return self.classes.shape[1]

    @property
    def height(self) -> int:
        return self.classes.shape[0]

    def palette_lut(self) -> np.ndarray:
        lut = np.zeros((256, 3), np.uint8)
        lut[:] = self.palette[RiskClass.UNKNOWN]
        for cls, rgb in self.palette.items():
            lut[int(cls)] = rgb
        return lut

    def to_rgb(self) -> np.ndarray:
        return self.palette_lut()[self.classes]

    def counts(self) -> dict[str, int]:
        return {c.name.lower(): int((self.classes == c).sum()) for c in RiskClass}


def normalized_difference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``(a - b) / (a + b)`` per pixel in float64.

    NaN where either input is NaN or ``|a + b| < 1e-12``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise SpectralError(f"plane shapes differ: {a.shape} vs {b.shape}")
    den = a + b
    bad = ~(np.abs(den) >= ZERO_DENOMINATOR)  # also catches NaN
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (a - b) / np.where(bad, 1.0, den)
    out[bad] = np.nan
    return out


def resolve_planes(cube: SpectralCube, kind: IndexKind, sel: BandSelection) -> tuple[np.ndarray, np.ndarray]:
    wa, wb = sel.pair(kind)
    _, a = select_band(cube, wa, sel.tolerance)
    _, b = select_band(cube, wb, sel.tolerance)
    return a, b


def compute_index(cube: SpectralCube, kind: IndexKind | str, sel: BandSelection | None = None) -> IndexMap:
    kind = IndexKind(kind)
    sel = sel or BandSelection()
    if cube.kind is not CubeKind.REFLECTANCE:
        raise SpectralError("indices are defined on reflectance cubes only")
    a, b = resolve_planes(cube, kind, sel)
    return IndexMap(normalized_difference(a, b), kind, cube.frame_id, cube.timestamp)


def ndwi(cube: SpectralCube, sel: BandSelection | None = None) -> IndexMap:
    """(G - NIR) / (G + NIR)."""
    return compute_index(cube, IndexKind.NDWI, sel)


def ndvi(cube: SpectralCube, sel: BandSelection | None = None) -> IndexMap:
    """(NIR - R) / (NIR + R)."""
    return compute_index(cube, IndexKind.NDVI, sel)


def ndmi(cube: SpectralCube, sel: BandSelection | None = None) -> IndexMap:
    """(NIR - SWIR) / (NIR + SWIR)."""
    return compute_index(cube, IndexKind.NDMI, sel)


def moisture_index(cube: SpectralCube, sel: BandSelection | None = None) -> IndexMap:
    """(R1300 - R1119) / (R1300 + R1119), using the bands nearest those centers."""
    return compute_index(cube, IndexKind.MOISTURE, sel)


def classify_values(values: np.ndarray) -> np.ndarray:
    """Risk codes for raw moisture values (shared with the fusion stage)."""
    v = np.asarray(values, dtype=np.float64)
    pct = np.clip(v, 0.0, 1.0) * 100.0
    out = np.full(v.shape, RiskClass.UNKNOWN, dtype=np.uint8)
    out[pct < HIGH_MEDIUM_EDGE] = RiskClass.HIGH
    out[(pct >= HIGH_MEDIUM_EDGE) & (pct < MEDIUM_LOW_EDGE)] = RiskClass.MEDIUM
    out[pct >= MEDIUM_LOW_EDGE] = RiskClass.LOW
    return out  # NaN fails every comparison and stays UNKNOWN


def classify_risk(moisture: IndexMap, palette: dict | None = None) -> RiskMap:
    if moisture.index_kind is not IndexKind.MOISTURE:
        raise SpectralError(f"risk classes need a moisture map, got {moisture.index_kind.value}")
    return RiskMap(classify_values(moisture.values), dict(palette or DEFAULT_PALETTE),
                   moisture.frame_id, moisture.timestamp)


# ------------------------------------------------------------------- export

def save_index(index: IndexMap, path: str | Path) -> Path:
    return save_plane(index.values.astype(np.float32), path, "index",
                      index_kind=index.index_kind.value, frame_id=index.frame_id,
                      timestamp="none" if index.timestamp is None else repr(float(index.timestamp)))


def load_index(path: str | Path) -> IndexMap:
    data, header = load_plane(path, "index")
    ts = header.get("timestamp", "none")
    return IndexMap(data.astype(np.float64), IndexKind(header["index kind"]),
                    header.get("frame id", ""), None if ts == "none" else float(ts))


def save_index_png(index: IndexMap, path: str | Path) -> None:
    """8-bit grayscale: values clamped to [0, 1] scale to 0..255; NaN is 0."""
    v = np.nan_to_num(np.clip(index.values, 0.0, 1.0), nan=0.0)
    Image.fromarray(np.floor(v * 255.0 + 0.5).astype(np.uint8), mode="L").save(path, optimize=False)


def save_risk(risk: RiskMap, stem: str | Path) -> None:
    """``<stem>.hdr/.bin`` class codes, ``<stem>.png`` colours, ``<stem>.counts.json``."""
    stem = Path(stem)
    save_plane(risk.classes, stem, "risk-classes", frame_id=risk.frame_id,
               timestamp="none" if risk.timestamp is None else repr(float(risk.timestamp)))
    Image.fromarray(risk.to_rgb(), mode="RGB").save(stem.with_name(stem.name + ".png"), optimize=False)
    summary = {"frame_id": risk.frame_id, "counts": risk.counts(),
               "palette": {c.name.lower(): list(rgb) for c, rgb in sorted(risk.palette.items())}}
    stem.with_name(stem.name + ".counts.json").write_text(json.dumps(summary, indent=2) + "\n",
                                                         encoding="utf-8")


def load_risk(stem: str | Path, palette: dict | None = None) -> RiskMap:
    data, header = load_plane(stem, "risk-classes")
    ts = header.get("timestamp", "none")
    return RiskMap(data, dict(palette or DEFAULT_PALETTE), header.get("frame id", ""),
                   None if ts == "none" else float(ts))
