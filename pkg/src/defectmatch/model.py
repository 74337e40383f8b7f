"""Domain types shared by every pipeline stage.

All types are frozen dataclasses: instances are safe to share across
worker threads without copying. Polygons are stored as tuples of (x, y)
pairs so detections stay hashable; convert with region_array() when
numeric work is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import DataError

CATEGORIES = frozenset({"defect", "element", "utility"})

# class_label -> category. Datasets may declare their own table; this one
# covers the labels used by the bundled generator and common inspection
# inventories.
DEFAULT_CLASS_TABLE = {
    "crack": "defect",
    "corrosion": "defect",
    "spalling": "defect",
    "exposed_rebar": "defect",
    "efflorescence": "defect",
    "column": "element",
    "beam": "element",
    "deck": "element",
    "wall": "element",
    "ruler": "utility",
    "marker": "utility",
    "tag": "utility",
}


def canonical_pair(id_a: str, id_b: str) -> tuple[str, str]:
    """Order an unordered id pair lexicographically. Self-pairs are invalid."""
    if id_a == id_b:
        raise ValueError(f"self-pair forbidden: {id_a!r}")
    return (id_a, id_b) if id_a < id_b else (id_b, id_a)


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    source_path: str
    width: int
    height: int
    acquisition_tag: str | None = None

    def __post_init__(self):
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
        if self.width < 1 or self.height < 1:
            raise ValueError(
                f"image {self.image_id!r}: dimensions must be >= 1, got {self.width}x{self.height}"
            )


@dataclass(frozen=True)
class Detection:
    """A classed polygonal region predicted on a single image."""

    detection_id: str
    image_id: str
    category: str
    class_label: str
    region: tuple[tuple[float, float], ...]
    confidence: float = 1.0

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(
                f"detection {self.detection_id!r}: category {self.category!r} "
                f"not in {sorted(CATEGORIES)}"
            )
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(
                f"detection {self.detection_id!r}: confidence {self.confidence} outside [0, 1]"
            )
        region = tuple((float(x), float(y)) for x, y in self.region)
        if len(region) < 3:
            raise ValueError(
                f"detection {self.detection_id!r}: region needs >= 3 vertices, got {len(region)}"
            )
        object.__setattr__(self, "region", region)

    def region_array(self) -> np.ndarray:
        return np.asarray(self.region, dtype=np.float64)


@dataclass(frozen=True)
class Keypoint:
    """Corner location in full-resolution image coordinates."""

    x: float
    y: float
    octave: int
    orientation: float
    response: float

    def __post_init__(self):
        if self.octave < 0:
            raise ValueError(f"octave must be >= 0, got {self.octave}")
        if not 0.0 <= self.orientation < 2.0 * np.pi:
            raise ValueError(f"orientation {self.orientation} outside [0, 2*pi)")
        if self.response < 0.0:
            raise ValueError(f"response must be non-negative, got {self.response}")


@dataclass(frozen=True)
class KeypointMatch:
    """One keypoint correspondence between two distinct images.

    Stored canonically: image_a < image_b by id, swapping index fields to
    follow. Construction with image_a == image_b is an error.
    """

    image_a: str
    image_b: str
    kp_index_a: int
    kp_index_b: int
    distance: int

    def __post_init__(self):
        if self.image_a == self.image_b:
            raise ValueError(f"match within one image forbidden: {self.image_a!r}")
        if self.image_a > self.image_b:
            a, b = self.image_b, self.image_a
            ia, ib = self.kp_index_b, self.kp_index_a
            object.__setattr__(self, "image_a", a)
            object.__setattr__(self, "image_b", b)
            object.__setattr__(self, "kp_index_a", ia)
            object.__setattr__(self, "kp_index_b", ib)
        if not 0 <= self.distance <= 256:
            raise ValueError(f"Hamming distance {self.distance} outside [0, 256]")


@dataclass(frozen=True)
class GroundTruth:
    """Manually annotated matches: unordered detection-id pairs plus chains."""

    pairwise_matches: frozenset[tuple[str, str]] = field(default_factory=frozenset)
    chains: tuple[frozenset[str], ...] = ()

    def __post_init__(self):
        pairs = frozenset(canonical_pair(a, b) for a, b in self.pairwise_matches)
        object.__setattr__(self, "pairwise_matches", pairs)
        chains = tuple(frozenset(c) for c in self.chains)
        object.__setattr__(self, "chains", chains)
        seen: set[str] = set()
        for chain in chains:
            overlap = seen & chain
            if overlap:
                raise ValueError(
                    f"ground-truth chains overlap on detection ids {sorted(overlap)}"
                )
            seen |= chain


def validate_detection(
    det: Detection,
    img: ImageRecord,
    class_table: dict[str, str] | None = None,
) -> Detection:
    """Check a detection against its image and clip its region to bounds.

    Raises DataError on: unknown class_label, category disagreeing with
    the class table, non-simple input polygon, or a region that leaves
    nothing usable inside the image.
    """
    if det.image_id != img.image_id:
        raise ValueError(
            f"detection {det.detection_id!r} references {det.image_id!r}, "
            f"validated against {img.image_id!r}"
        )
    table = DEFAULT_CLASS_TABLE if class_table is None else class_table
    expected = table.get(det.class_label)
    if expected is None:
        raise DataError(
            f"detection {det.detection_id!r}: unknown class_label {det.class_label!r}"
        )
    if expected != det.category:
        raise DataError(
            f"detection {det.detection_id!r}: class {det.class_label!r} is "
            f"category {expected!r}, record says {det.category!r}"
        )
    region = det.region_array()
    if not geometry.is_simple_polygon(region):
        raise DataError(
            f"detection {det.detection_id!r}: region polygon is self-intersecting or degenerate"
        )
    clipped = geometry.clip_polygon_to_rect(region, img.width, img.height)
    cleaned = None if clipped.shape[0] < 3 else geometry.clean_polygon(clipped)
    if cleaned is None:
        raise DataError(
            f"detection {det.detection_id!r}: region lies outside image "
            f"{img.image_id!r} bounds {img.width}x{img.height}"
        )
    if not geometry.is_simple_polygon(cleaned):
        raise DataError(
            f"detection {det.detection_id!r}: region splits against image bounds"
        )
    if np.array_equal(cleaned, region):
        return det
    return Detection(
        detection_id=det.detection_id,
        image_id=det.image_id,
        category=det.category,
        class_label=det.class_label,
        region=tuple((float(x), float(y)) for x, y in cleaned),
        confidence=det.confidence,
    )
