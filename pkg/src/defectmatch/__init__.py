"""Defect matching across overlapping structural-inspection images."""

from .errors import ConfigError, DataError, DefectMatchError, PipelineError
from .model import (
    CATEGORIES,
    DEFAULT_CLASS_TABLE,
    Detection,
    GroundTruth,
    ImageRecord,
    Keypoint,
    KeypointMatch,
    canonical_pair,
    validate_detection,
)

__version__ = "0.1.0"

__all__ = [
    "CATEGORIES",
    "DEFAULT_CLASS_TABLE",
    "ConfigError",
    "DataError",
    "DefectMatchError",
    "Detection",
    "GroundTruth",
    "ImageRecord",
    "Keypoint",
    "KeypointMatch",
    "PipelineError",
    "canonical_pair",
    "validate_detection",
    "__version__",
]
