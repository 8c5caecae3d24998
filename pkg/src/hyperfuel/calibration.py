"""Radiometric calibration: raw radiance to reflectance with dark and reference signals."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .datacube import CubeKind, Sensor, SpectralCube


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CalibrationSignals:
    """Per-band dark (``dark``) and white-reference (``reference``) signals."""

    sensor: Sensor
    wavelengths: tuple[float, ...]
    dark: np.ndarray
    reference: np.ndarray
    timestamp: float | None = None
    reference_description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "sensor", Sensor(self.sensor))
        object.__setattr__(self, "wavelengths", tuple(float(w) for w in self.wavelengths))
        dark = np.array(self.dark, dtype=np.float64).reshape(-1)
        ref = np.array(self.reference, dtype=np.float64).reshape(-1)
        if not (len(dark) == len(ref) == len(self.wavelengths)):
            raise CalibrationError("dark, reference and wavelength lists differ in length")
        bad = np.flatnonzero(~(ref - dark > 0))
        if bad.size:
            raise CalibrationError(
                f"reference <= dark at band {int(bad[0])} ({self.wavelengths[bad[0]]:g} nm)"
            )
        dark.flags.writeable = False
        ref.flags.writeable = False
        object.__setattr__(self, "dark", dark)
        object.__setattr__(self, "reference", ref)

    def matches(self, cube: SpectralCube) -> bool:
        return (len(cube.bands) == len(self.wavelengths)
                and all(b.source_sensor is self.sensor for b in cube.bands)
                and tuple(b.center_wavelength for b in cube.bands) == self.wavelengths)

    def to_dict(self) -> dict:
        return {
            "sensor": self.sensor.value,
            "wavelengths": list(self.wavelengths),
            "dark": [float(v) for v in self.dark],
            "reference": [float(v) for v in self.reference],
            "timestamp": self.timestamp,
            "reference_description": self.reference_description,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationSignals":
        try:
            return cls(Sensor(d["sensor"]), d["wavelengths"], d["dark"], d["reference"],
                       d.get("timestamp"), d.get("reference_description", ""))
        except KeyError as exc:
            raise CalibrationError(f"signals file missing {exc.args[0]!r}") from None


def save_signals(signals: CalibrationSignals, path: str | Path) -> None:
    Path(path).write_text(json.dumps(signals.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_signals(path: str | Path) -> CalibrationSignals:
    return CalibrationSignals.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def to_reflectance(cube: SpectralCube, signals: CalibrationSignals) -> SpectralCube:
    """Per band: ``(S - dark) / (reference - dark)``.

    Values are neither clamped at 0 nor at 1; NaN samples stay NaN.
    """
    if cube.kind is not CubeKind.RAW:
        raise CalibrationError(f"cube {cube.frame_id!r} is already {cube.kind.value}")
    if not signals.matches(cube):
        raise CalibrationError(
            f"signals for {signals.sensor.value} do not match the band list of cube {cube.frame_id!r}"
        )
    dark = signals.dark[:, None, None]
    span = (signals.reference - signals.dark)[:, None, None]
    refl = (cube.planes.astype(np.float64) - dark) / span
    return cube.replace(planes=refl.astype(np.float32), kind=CubeKind.REFLECTANCE)


def estimate_dark(frames: Sequence[SpectralCube]) -> np.ndarray:
    """Per-band mean over every non-NaN sample of every frame."""
    if not frames:
        raise CalibrationError("no dark frames given")
    bands = frames[0].bands
    if any(f.bands != bands for f in frames[1:]):
        raise CalibrationError("dark frames differ in band list")
    total = np.zeros(len(bands))
    count = np.zeros(len(bands))
    for f in frames:
        p = f.planes.astype(np.float64)
        ok = ~np.isnan(p)
        total += np.where(ok, p, 0.0).sum(axis=(1, 2))
        count += ok.sum(axis=(1, 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        return total / count


def nearest_signals(candidates: Sequence[CalibrationSignals], timestamp: float | None) -> CalibrationSignals:
    """Pick the signal set closest in time; untimed sets only win when nothing is timed."""
    if not candidates:
        raise CalibrationError("no calibration signals supplied")
    if timestamp is None:
        return candidates[0]
    timed = [(abs(c.timestamp - timestamp), i) for i, c in enumerate(candidates) if c.timestamp is not None]
    if not timed:
        return candidates[0]
    return candidates[min(timed)[1]]
