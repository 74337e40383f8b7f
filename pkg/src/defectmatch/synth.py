"""Synthetic inspection surveys with exact ground truth.

A textured canvas gets planted defects (dark mottled shapes) and
ruler-like utility props, then overlapping rotated crops are cut from it.
Because every crop's similarity transform is known, the per-crop
detections, the pairwise matches, and the defect chains are all exact.

Annotated regions are convex hulls of the drawn marks: windowed clipping
of a convex polygon is always a simple polygon, so emitted detections
survive strict validation regardless of where a crop cuts them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import ConfigError
from .geometry import (
    clean_polygon,
    clip_polygon_to_rect,
    convex_hull,
    points_in_polygon,
    polygon_area,
)
from .model import (
    DEFAULT_CLASS_TABLE,
    Detection,
    GroundTruth,
    ImageRecord,
    canonical_pair,
)

VISIBLE_AREA_FRACTION = 0.5


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 7
    canvas_size: tuple[int, int] = (2048, 2048)
    n_crops: int = 30
    crop_size: tuple[int, int] = (640, 480)
    overlap_target: float = 0.5
    n_defects: int = 10
    defect_classes: tuple[str, ...] = ("crack", "corrosion")
    n_utilities: int = 2
    rotation_jitter: float = 10.0
    noise_sigma: float = 2.0
    scale_jitter: float = 0.0
    center_jitter: float = 24.0

    def __post_init__(self):
        object.__setattr__(self, "canvas_size", tuple(int(v) for v in self.canvas_size))
        object.__setattr__(self, "crop_size", tuple(int(v) for v in self.crop_size))
        object.__setattr__(self, "defect_classes", tuple(self.defect_classes))
        if len(self.canvas_size) != 2 or min(self.canvas_size) < 64:
            raise ConfigError(f"canvas_size too small: {self.canvas_size}")
        if len(self.crop_size) != 2 or min(self.crop_size) < 64:
            raise ConfigError(f"crop_size too small: {self.crop_size}")
        if self.n_crops < 1:
            raise ConfigError(f"n_crops must be >= 1, got {self.n_crops}")
        if not 0.0 <= self.overlap_target < 1.0:
            raise ConfigError(
                f"overlap_target must lie in [0, 1), got {self.overlap_target}"
            )
        if self.n_defects < 0 or self.n_utilities < 0:
            raise ConfigError("shape counts must be >= 0")
        if not self.defect_classes:
            raise ConfigError("defect_classes must not be empty")
        for label in self.defect_classes:
            if DEFAULT_CLASS_TABLE.get(label) != "defect":
                raise ConfigError(f"{label!r} is not a known defect class")
        if not 0.0 <= self.rotation_jitter <= 45.0:
            raise ConfigError(
                f"rotation_jitter must lie in [0, 45] degrees, got {self.rotation_jitter}"
            )
        if not 0.0 <= self.scale_jitter < 0.5:
            raise ConfigError(f"scale_jitter must lie in [0, 0.5), got {self.scale_jitter}")
        if self.noise_sigma < 0 or self.center_jitter < 0:
            raise ConfigError("noise_sigma and center_jitter must be >= 0")
        margin = self.crop_margin()
        if self.canvas_size[0] < 2 * margin or self.canvas_size[1] < 2 * margin:
            raise ConfigError(
                f"rotated {self.crop_size} crop with jitter does not fit "
                f"canvas {self.canvas_size}"
            )

    def crop_margin(self) -> float:
        """Distance a crop center must keep from the canvas edge so the
        rotated, scaled, jittered window never samples outside."""
        w, h = self.crop_size
        half_diag = math.hypot(w, h) / 2.0
        return (1.0 + self.scale_jitter) * half_diag + self.center_jitter + 1.0


@dataclass(frozen=True)
class PlantedShape:
    shape_id: str
    category: str
    class_label: str
    polygon: tuple[tuple[float, float], ...]

    def polygon_array(self) -> np.ndarray:
        return np.array(self.polygon, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class SynthTruth:
    crop_transforms: dict[str, np.ndarray]
    planted: tuple[PlantedShape, ...]
    detection_origin: dict[str, str]
    crop_centers: dict[str, tuple[float, float]] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class SynthScene:
    records: tuple[ImageRecord, ...]
    pixels: dict[str, np.ndarray]
    embeddings: dict[str, np.ndarray]
    detections: tuple[Detection, ...]
    ground_truth: GroundTruth
    truth: SynthTruth


def _value_noise(rng, height, width, cells, amplitude):
    grid = rng.uniform(-amplitude, amplitude, size=(cells + 1, cells + 1))
    gy = np.linspace(0.0, cells, height, endpoint=False)
    gx = np.linspace(0.0, cells, width, endpoint=False)
    y0 = np.minimum(gy.astype(np.int64), cells - 1)
    x0 = np.minimum(gx.astype(np.int64), cells - 1)
    ty = (gy - y0)[:, None]
    tx = (gx - x0)[None, :]
    top = grid[np.ix_(y0, x0)] * (1 - tx) + grid[np.ix_(y0, x0 + 1)] * tx
    bottom = grid[np.ix_(y0 + 1, x0)] * (1 - tx) + grid[np.ix_(y0 + 1, x0 + 1)] * tx
    return top * (1 - ty) + bottom * ty


def _texture(rng, height, width):
    """Concrete-like base: coarse tone variation plus fine grain that
    feeds the corner detector everywhere."""
    out = np.full((height, width), 128.0)
    for cells, amplitude in ((16, 38.0), (128, 52.0), (256, 30.0)):
        cells = min(cells, max(2, min(height, width) // 4))
        out += _value_noise(rng, height, width, cells, amplitude)
    return np.clip(np.rint(out), 8, 247).astype(np.uint8)


def _bbox_grid(canvas, pts, pad):
    h, w = canvas.shape
    x0 = max(0, int(math.floor(pts[:, 0].min() - pad)))
    x1 = min(w - 1, int(math.ceil(pts[:, 0].max() + pad)))
    y0 = max(0, int(math.floor(pts[:, 1].min() - pad)))
    y1 = min(h - 1, int(math.ceil(pts[:, 1].max() + pad)))
    xs = np.arange(x0, x1 + 1)
    ys = np.arange(y0, y1 + 1)
    xx, yy = np.meshgrid(xs, ys)
    return xx, yy


def _paint(canvas, xx, yy, mask, base, spread, rng):
    count = int(mask.sum())
    if count == 0:
        return
    values = base + rng.integers(-spread, spread + 1, size=count)
    canvas[yy[mask], xx[mask]] = np.clip(values, 0, 255).astype(np.uint8)


def _pad_hull(points, pad):
    """Convex hull of the points plus a ring of offsets, so the hull
    clears the drawn marks by at least pad."""
    ring = [
        (pad * math.cos(a), pad * math.sin(a))
        for a in np.linspace(0.0, 2.0 * math.pi, 8, endpoint=False)
    ]
    padded = [p + np.array(offset) for p in points for offset in ring]
    return convex_hull(np.array(padded))


class _PendingShape:
    """Geometry generated around the origin, waiting for a center."""

    def __init__(self, shape_id, category, class_label, radius, draw, region):
        self.shape_id = shape_id
        self.category = category
        self.class_label = class_label
        self.radius = radius
        self.draw = draw  # draw(canvas, center, rng): paint the marks
        self.region = region  # region(center) -> canvas-space polygon


def _make_crack(rng, shape_id):
    n_seg = int(rng.integers(3, 6))
    width = float(rng.uniform(3.0, 6.0))
    heading = float(rng.uniform(0.0, 2.0 * math.pi))
    pts = [np.zeros(2)]
    for _ in range(n_seg):
        step = float(rng.uniform(28.0, 52.0))
        heading += float(rng.uniform(-0.5, 0.5))
        pts.append(pts[-1] + step * np.array([math.cos(heading), math.sin(heading)]))
    walk = np.array(pts)
    walk -= walk.mean(axis=0)
    pad = width + 5.0
    radius = float(np.linalg.norm(walk, axis=1).max() + pad + 2.0)

    def draw(canvas, center, draw_rng):
        placed = walk + center
        xx, yy = _bbox_grid(canvas, placed, pad)
        px = xx.astype(np.float64)
        py = yy.astype(np.float64)
        dist = np.full(xx.shape, np.inf)
        for a, b in zip(placed[:-1], placed[1:]):
            ab = b - a
            denom = float(ab @ ab)
            t = np.clip(((px - a[0]) * ab[0] + (py - a[1]) * ab[1]) / denom, 0.0, 1.0)
            dx = px - (a[0] + t * ab[0])
            dy = py - (a[1] + t * ab[1])
            dist = np.minimum(dist, np.hypot(dx, dy))
        _paint(canvas, xx, yy, dist <= width, base=38, spread=18, rng=draw_rng)

    def region(center):
        return _pad_hull(walk + center, pad)

    return _PendingShape(shape_id, "defect", "crack", radius, draw, region)


def _make_corrosion(rng, shape_id):
    n = int(rng.integers(9, 14))
    angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, size=n))
    radii = rng.uniform(24.0, 52.0, size=n)
    poly = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    pad = 5.0
    radius = float(radii.max() + pad + 2.0)

    def draw(canvas, center, draw_rng):
        placed = poly + center
        xx, yy = _bbox_grid(canvas, placed, 1)
        pts = np.stack([xx.ravel(), yy.ravel()], axis=1).astype(np.float64)
        mask = points_in_polygon(pts, placed).reshape(xx.shape)
        _paint(canvas, xx, yy, mask, base=72, spread=30, rng=draw_rng)

    def region(center):
        return _pad_hull(poly + center, pad)

    return _PendingShape(shape_id, "defect", "corrosion", radius, draw, region)


RULER_LENGTH = 320
RULER_BREADTH = 36


def _ruler_tile(rng):
    """High-contrast periodic tick pattern; a keypoint magnet."""
    tile = np.full((RULER_BREADTH, RULER_LENGTH), 228.0)
    tile += rng.uniform(-6.0, 6.0, size=tile.shape)
    tile[:2, :] = 45
    tile[-2:, :] = 45
    tile[:, :2] = 45
    tile[:, -2:] = 45
    for i, x in enumerate(range(8, RULER_LENGTH - 4, 10)):
        tick = 24 if i % 5 == 0 else 14
        tile[4 : 4 + tick, x : x + 2] = 30
    return np.clip(np.rint(tile), 0, 255).astype(np.uint8)


def _stamp_tile(canvas, tile, top_left):
    ty, tx = top_left
    h, w = tile.shape
    canvas[ty : ty + h, tx : tx + w] = tile


def _tile_region(top_left, shape):
    ty, tx = top_left
    h, w = shape
    return (
        (tx - 0.5, ty - 0.5),
        (tx + w - 0.5, ty - 0.5),
        (tx + w - 0.5, ty + h - 0.5),
        (tx - 0.5, ty + h - 0.5),
    )


def _make_ruler(rng, shape_id):
    tile = _ruler_tile(rng)
    vertical = bool(rng.integers(0, 2))
    if vertical:
        tile = tile.T.copy()
    h, w = tile.shape
    radius = math.hypot(w / 2.0, h / 2.0) + 2.0

    def snap(center):
        return (int(round(center[1] - h / 2.0)), int(round(center[0] - w / 2.0)))

    def draw(canvas, center, draw_rng):
        _stamp_tile(canvas, tile, snap(center))

    def region(center):
        return np.array(_tile_region(snap(center), tile.shape))

    return _PendingShape(shape_id, "utility", "ruler", radius, draw, region)


def _crop_centers(cfg: SynthConfig) -> list[tuple[float, float]]:
    width, height = cfg.canvas_size
    crop_w, crop_h = cfg.crop_size
    margin = cfg.crop_margin()
    step_x = crop_w * (1.0 - cfg.overlap_target)
    step_y = crop_h * (1.0 - cfg.overlap_target)
    x_max = width - margin
    y_max = height - margin

    positions: list[tuple[float, float]] = []
    offsets = ((0.0, 0.0), (0.5, 0.5), (0.5, 0.0), (0.0, 0.5))
    for frac_x, frac_y in offsets:
        xs = np.arange(margin + frac_x * step_x, x_max + 1e-9, step_x)
        ys = np.arange(margin + frac_y * step_y, y_max + 1e-9, step_y)
        if xs.size == 0 or ys.size == 0:
            continue
        for row, y in enumerate(ys):
            cols = xs if row % 2 == 0 else xs[::-1]
            positions.extend((float(x), float(y)) for x in cols)
        if len(positions) >= cfg.n_crops:
            break
    if len(positions) < cfg.n_crops:
        raise ConfigError(
            f"n_crops={cfg.n_crops} exceeds placement capacity "
            f"{len(positions)} for this canvas/crop/overlap combination"
        )
    return positions[: cfg.n_crops]


def _place_shapes(rng, pending, box):
    """Assign centers by rejection sampling with pairwise clearance, so
    planted regions never overlap and counting stays unambiguous."""
    (x_lo, x_hi), (y_lo, y_hi) = box
    placed: list[tuple[np.ndarray, float]] = []
    centers = []
    for shape in pending:
        ok = None
        for _ in range(4000):
            cand = np.array(
                [rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi)]
            )
            if all(
                np.linalg.norm(cand - c) >= shape.radius + r + 30.0
                for c, r in placed
            ):
                ok = cand
                break
        if ok is None:
            raise ConfigError(
                "could not place planted shapes with clearance; "
                "reduce n_defects/n_utilities or enlarge the canvas"
            )
        placed.append((ok, shape.radius))
        centers.append(ok)
    return centers


def _bilinear(canvas_f: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w = canvas_f.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.minimum(xs.astype(np.int64), w - 2)
    y0 = np.minimum(ys.astype(np.int64), h - 2)
    fx = xs - x0
    fy = ys - y0
    c00 = canvas_f[y0, x0]
    c01 = canvas_f[y0, x0 + 1]
    c10 = canvas_f[y0 + 1, x0]
    c11 = canvas_f[y0 + 1, x0 + 1]
    return (
        c00 * (1 - fy) * (1 - fx)
        + c01 * (1 - fy) * fx
        + c10 * fy * (1 - fx)
        + c11 * fy * fx
    )


def _render_crop(canvas_f, center, angle, scale, crop_size):
    w, h = crop_size
    ccx = (w - 1) / 2.0
    ccy = (h - 1) / 2.0
    cos_a = math.cos(angle)
    sin_a = math.sin(angle)
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    dx = xs - ccx
    dy = ys - ccy
    u = center[0] + scale * (cos_a * dx - sin_a * dy)
    v = center[1] + scale * (sin_a * dx + cos_a * dy)
    pixels = _bilinear(canvas_f, u, v)

    # canvas -> crop: undo the similarity
    inv_s = 1.0 / scale
    transform = np.array(
        [
            [inv_s * cos_a, inv_s * sin_a, 0.0],
            [-inv_s * sin_a, inv_s * cos_a, 0.0],
            [0.0, 0.0, 1.0],
        ]
    )
    shift = transform[:2, :2] @ np.array([-center[0], -center[1]])
    transform[0, 2] = shift[0] + ccx
    transform[1, 2] = shift[1] + ccy
    return pixels, transform


def _apply_transform(transform: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    return polygon @ transform[:2, :2].T + transform[:2, 2]


def thumbnail_embedding(pixels: np.ndarray) -> np.ndarray:
    """Stand-in for a CNN global descriptor: mean-centered 8x8 thumbnail,
    unit length."""
    img = Image.fromarray(pixels).resize((8, 8), Image.Resampling.BOX)
    vec = np.asarray(img, dtype=np.float64).ravel()
    vec = vec - vec.mean()
    norm = float(np.linalg.norm(vec))
    if norm < 1e-9:
        vec = np.zeros(64)
        vec[0] = 1.0
        return vec
    return vec / norm


def _emit_detections(cfg, image_ids, transforms, planted):
    crop_w, crop_h = cfg.crop_size
    detections = []
    origin = {}
    for shape in planted:
        polygon = shape.polygon_array()
        for image_id in image_ids:
            projected = _apply_transform(transforms[image_id], polygon)
            full_area = polygon_area(projected)
            if full_area <= 0:
                continue
            clipped = clip_polygon_to_rect(projected, crop_w, crop_h)
            if clipped.shape[0] < 3:
                continue
            if polygon_area(clipped) / full_area < VISIBLE_AREA_FRACTION:
                continue
            cleaned = clean_polygon(clipped)
            if cleaned is None:
                continue
            det_id = f"{image_id}:{shape.shape_id}"
            detections.append(
                Detection(
                    detection_id=det_id,
                    image_id=image_id,
                    category=shape.category,
                    class_label=shape.class_label,
                    region=tuple((float(x), float(y)) for x, y in cleaned),
                    confidence=0.9,
                )
            )
            origin[det_id] = shape.shape_id
    detections.sort(key=lambda d: d.detection_id)
    return detections, origin


def _ground_truth(detections, origin) -> GroundTruth:
    by_shape: dict[str, list[str]] = {}
    for det in detections:
        if det.category != "defect":
            continue
        by_shape.setdefault(origin[det.detection_id], []).append(det.detection_id)
    pairs = set()
    chains = []
    for shape_id in sorted(by_shape):
        ids = sorted(by_shape[shape_id])
        chains.append(frozenset(ids))
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                pairs.add(canonical_pair(ids[i], ids[j]))
    chains.sort(key=min)
    return GroundTruth(pairwise_matches=frozenset(pairs), chains=tuple(chains))


def generate(cfg: SynthConfig) -> SynthScene:
    """Deterministic scene synthesis: same config, same scene, bit for bit."""
    rng = np.random.default_rng(cfg.seed)
    width, height = cfg.canvas_size
    crop_w, crop_h = cfg.crop_size

    centers = _crop_centers(cfg)
    canvas = _texture(rng, height, width)

    pending = []
    for i in range(cfg.n_defects):
        label = cfg.defect_classes[i % len(cfg.defect_classes)]
        shape_id = f"defect{i:02d}"
        if label == "crack":
            shape = _make_crack(rng, shape_id)
        else:
            # blotch geometry serves every non-crack defect class
            shape = _make_corrosion(rng, shape_id)
            shape.class_label = label
        pending.append(shape)
    for i in range(cfg.n_utilities):
        pending.append(_make_ruler(rng, f"ruler{i}"))

    xs = [c[0] for c in centers]
    ys = [c[1] for c in centers]
    # pad the placement region by a quarter crop: still well covered by
    # the crop grid, but with enough room to keep shapes apart
    box = (
        (min(xs) - crop_w / 4.0, max(xs) + crop_w / 4.0),
        (min(ys) - crop_h / 4.0, max(ys) + crop_h / 4.0),
    )
    shape_centers = _place_shapes(rng, pending, box)

    planted = []
    for shape, center in zip(pending, shape_centers):
        shape.draw(canvas, center, rng)
        polygon = shape.region(center)
        planted.append(
            PlantedShape(
                shape_id=shape.shape_id,
                category=shape.category,
                class_label=shape.class_label,
                polygon=tuple((float(x), float(y)) for x, y in polygon),
            )
        )

    canvas_f = canvas.astype(np.float32)
    records = []
    pixels = {}
    embeddings = {}
    transforms = {}
    crop_center_map = {}
    for k, (gx, gy) in enumerate(centers):
        image_id = f"crop{k:03d}"
        angle = math.radians(rng.uniform(-cfg.rotation_jitter, cfg.rotation_jitter))
        scale = 1.0 + rng.uniform(-cfg.scale_jitter, cfg.scale_jitter)
        jx, jy = rng.uniform(-cfg.center_jitter, cfg.center_jitter, size=2)
        center = (gx + jx, gy + jy)
        raw, transform = _render_crop(canvas_f, center, angle, scale, cfg.crop_size)
        if cfg.noise_sigma > 0:
            raw = raw + rng.normal(0.0, cfg.noise_sigma, size=raw.shape)
        crop = np.clip(np.rint(raw), 0, 255).astype(np.uint8)
        records.append(ImageRecord(image_id, f"{image_id}.png", crop_w, crop_h))
        pixels[image_id] = crop
        embeddings[image_id] = thumbnail_embedding(crop)
        transforms[image_id] = transform
        crop_center_map[image_id] = (float(center[0]), float(center[1]))

    image_ids = [r.image_id for r in records]
    detections, origin = _emit_detections(cfg, image_ids, transforms, tuple(planted))
    ground_truth = _ground_truth(detections, origin)
    truth = SynthTruth(
        crop_transforms=transforms,
        planted=tuple(planted),
        detection_origin=origin,
        crop_centers=crop_center_map,
    )
    return SynthScene(
        records=tuple(records),
        pixels=pixels,
        embeddings=embeddings,
        detections=tuple(detections),
        ground_truth=ground_truth,
        truth=truth,
    )


def plant_trap_scenario(cfg: SynthConfig) -> SynthScene:
    """The ruler trap: two crops from disjoint canvas regions that share
    nothing except a pixel-identical ruler, plus plain context crops.

    Retrieval that cannot ignore the ruler's keypoints will rank the two
    trap crops as near-duplicates even though zero structure is shared.
    """
    rng = np.random.default_rng(cfg.seed)
    width, height = cfg.canvas_size
    crop_w, crop_h = cfg.crop_size
    if width < 2 * crop_w or height < 2 * crop_h:
        raise ConfigError(
            "trap scenario needs the canvas to hold two disjoint crops"
        )
    canvas = _texture(rng, height, width)
    tile = _ruler_tile(rng)

    # centers sit on half-pixel offsets so axis-aligned crops sample the
    # canvas at integer coordinates: the two ruler stamps survive
    # resampling pixel-identical
    def snap_center(frac_x, frac_y):
        return (
            math.floor(width * frac_x) + 0.5,
            math.floor(height * frac_y) + 0.5,
        )

    trap_centers = [snap_center(0.25, 0.25), snap_center(0.75, 0.75)]
    context_centers = [
        snap_center(0.75, 0.25),
        snap_center(0.25, 0.75),
        (math.floor(width * 0.5) + 0.5, math.floor(crop_h * 0.75) + 0.5),
        (math.floor(width * 0.5) + 0.5, math.floor(height - crop_h * 0.75) + 0.5),
    ]

    ruler_regions = []
    for cx, cy in trap_centers:
        tx = int(round(cx - tile.shape[1] / 2.0))
        ty = int(round(cy - tile.shape[0] / 2.0))
        _stamp_tile(canvas, tile, (ty, tx))
        ruler_regions.append(_tile_region((ty, tx), tile.shape))

    canvas_f = canvas.astype(np.float32)
    names = ["trap0", "trap1"] + [f"context{i}" for i in range(len(context_centers))]
    all_centers = trap_centers + context_centers

    records = []
    pixels = {}
    transforms = {}
    crop_center_map = {}
    for image_id, center in zip(names, all_centers):
        raw, transform = _render_crop(canvas_f, center, 0.0, 1.0, cfg.crop_size)
        if cfg.noise_sigma > 0:
            raw = raw + rng.normal(0.0, cfg.noise_sigma, size=raw.shape)
        crop = np.clip(np.rint(raw), 0, 255).astype(np.uint8)
        records.append(ImageRecord(image_id, f"{image_id}.png", crop_w, crop_h))
        pixels[image_id] = crop
        transforms[image_id] = transform
        crop_center_map[image_id] = (float(center[0]), float(center[1]))

    planted = tuple(
        PlantedShape(
            shape_id=f"ruler{i}",
            category="utility",
            class_label="ruler",
            polygon=tuple((float(x), float(y)) for x, y in region),
        )
        for i, region in enumerate(ruler_regions)
    )
    detections, origin = _emit_detections(
        cfg, [r.image_id for r in records], transforms, planted
    )
    truth = SynthTruth(
        crop_transforms=transforms,
        planted=planted,
        detection_origin=origin,
        crop_centers=crop_center_map,
    )
    return SynthScene(
        records=tuple(sorted(records, key=lambda r: r.image_id)),
        pixels=pixels,
        embeddings={},
        detections=tuple(detections),
        ground_truth=GroundTruth(),
        truth=truth,
    )
