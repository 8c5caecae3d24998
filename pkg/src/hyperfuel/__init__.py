"""Snapshot hyperspectral + LiDAR fuel-moisture mapping."""

__version__ = "0.1.0"

from .calibration import CalibrationSignals, to_reflectance
from .datacube import BandInfo, CubeKind, Sensor, SpectralCube, ValidityMask, load_cube, save_cube, select_band
from .fusion import FusedCloud, PointCloud, PoseStamped, accumulate, colorize_cloud, voxel_downsample
from .geometry import CameraIntrinsics, Homography, RigidTransform, SensorCalibration, project_point, unproject_pixel
from .kernels import BACKEND
from .mosaic import MosaicLayout, default_layout, demosaic
from .pipeline import SessionManifest, StageReport, load_manifest, run_pipeline, validate_manifest
from .registration import RegisteredCube, max_valid_rectangle, register
from .spectral import (
    BandSelection,
    IndexKind,
    IndexMap,
    RiskClass,
    RiskMap,
    classify_risk,
    moisture_index,
    ndmi,
    ndvi,
    ndwi,
    normalized_difference,
)

__all__ = [
    "BACKEND", "BandInfo", "BandSelection", "CalibrationSignals", "CameraIntrinsics", "CubeKind",
    "FusedCloud", "Homography", "IndexKind", "IndexMap", "MosaicLayout", "PointCloud", "PoseStamped",
    "RegisteredCube", "RigidTransform", "RiskClass", "RiskMap", "Sensor", "SensorCalibration",
    "SessionManifest", "SpectralCube", "StageReport", "ValidityMask", "accumulate", "classify_risk",
    "colorize_cloud", "default_layout", "demosaic", "load_cube", "load_manifest", "max_valid_rectangle",
    "moisture_index", "ndmi", "ndvi", "ndwi", "normalized_difference", "project_point", "register",
    "run_pipeline", "save_cube", "select_band", "to_reflectance", "unproject_pixel", "validate_manifest",
    "voxel_downsample",
]
