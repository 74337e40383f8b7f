"""Multi-scale corner detection and 256-bit binary description.

Detector: FAST-9 segment test on a box-filtered image pyramid, 3x3
non-maximum suppression on an excess-contrast response, keypoints kept
clear of borders so the description patch always fits.

Descriptor: 256 seeded pseudo-random intensity comparisons in a disc of
patch_radius, steered by the keypoint's intensity-centroid orientation.
Bit layout is fixed by descriptor_pattern_seed, big-endian within bytes.

All functions are pure and deterministic; images may be processed in
parallel by callers.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ConfigError, DataError
from .model import Keypoint

MIN_LEVEL_SIDE = 32


@dataclass(frozen=True)
class FeatureConfig:
    fast_threshold: int = 20
    target_keypoints: int = 2000
    pyramid_levels: int = 8
    scale_factor: float = 1.2
    patch_radius: int = 15
    descriptor_pattern_seed: int = 42

    def __post_init__(self):
        if self.fast_threshold <= 0:
            raise ConfigError(f"fast_threshold must be positive, got {self.fast_threshold}")
        if self.target_keypoints < 1:
            raise ConfigError(f"target_keypoints must be >= 1, got {self.target_keypoints}")
        if self.pyramid_levels < 1:
            raise ConfigError(f"pyramid_levels must be >= 1, got {self.pyramid_levels}")
        if self.scale_factor <= 1.0:
            raise ConfigError(f"scale_factor must exceed 1, got {self.scale_factor}")
        if self.patch_radius < 3:
            raise ConfigError(f"patch_radius must be >= 3, got {self.patch_radius}")


@dataclass(frozen=True, eq=False)
class GrayImage:
    width: int
    height: int
    pixels: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width):
            raise ValueError(
                f"pixel array shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}"
            )
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {self.pixels.dtype}")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "GrayImage":
        arr = np.asarray(arr)
        if arr.ndim == 3:
            arr = to_grayscale(arr)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D or 3-D image array, got ndim={arr.ndim}")
        if arr.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {arr.dtype}")
        h, w = arr.shape
        return cls(width=w, height=h, pixels=arr)


@dataclass(frozen=True, eq=False)
class Pyramid:
    levels: tuple[GrayImage, ...]
    scale_factor: float
    level_scales: tuple[float, ...]


def to_grayscale(arr: np.ndarray) -> np.ndarray:
    """Fixed-point luma conversion; bit-exact across platforms."""
    arr = np.asarray(arr)
    if arr.ndim == 2:
        return arr.astype(np.uint8, copy=False)
    if arr.ndim != 3 or arr.shape[2] < 3:
        raise ValueError(f"expected (h, w, 3+) color array, got shape {arr.shape}")
    rgb = arr[:, :, :3].astype(np.uint32)
    luma = (77 * rgb[:, :, 0] + 150 * rgb[:, :, 1] + 29 * rgb[:, :, 2] + 128) >> 8
    return luma.astype(np.uint8)


def build_pyramid(img: GrayImage, cfg: FeatureConfig) -> Pyramid:
    """Downscale from the base image at each level: floor(base / factor^k).

    Stops early once a side would drop below 32 px. Box resampling.
    """
    if img.width < MIN_LEVEL_SIDE or img.height < MIN_LEVEL_SIDE:
        raise DataError(
            f"image {img.width}x{img.height} smaller than "
            f"{MIN_LEVEL_SIDE}x{MIN_LEVEL_SIDE} minimum"
        )
    base = Image.fromarray(img.pixels, mode="L")
    levels = [img]
    scales = [1.0]
    for k in range(1, cfg.pyramid_levels):
        factor = cfg.scale_factor**k
        w = int(img.width / factor)
        h = int(img.height / factor)
        if w < MIN_LEVEL_SIDE or h < MIN_LEVEL_SIDE:
            break
        resized = np.asarray(base.resize((w, h), Image.Resampling.BOX))
        levels.append(GrayImage(width=w, height=h, pixels=resized))
        scales.append(factor)
    return Pyramid(levels=tuple(levels), scale_factor=cfg.scale_factor, level_scales=tuple(scales))


# 16-pixel Bresenham circle of radius 3, clockwise from 12 o'clock.
_CIRCLE = np.array(
    [
        (0, -3), (1, -3), (2, -2), (3, -1),
        (3, 0), (3, 1), (2, 2), (1, 3),
        (0, 3), (-1, 3), (-2, 2), (-3, 1),
        (-3, 0), (-3, -1), (-2, -2), (-1, -3),
    ],
    dtype=np.int64,
)


@functools.cache
def _arc_lut() -> np.ndarray:
    """For every 16-bit mask: does it contain a circular run of >= 9 set bits?"""
    masks = np.arange(65536, dtype=np.uint32)
    bits = ((masks[:, None] >> np.arange(16)) & 1).astype(np.uint8)
    doubled = np.concatenate([bits, bits], axis=1)
    windows = np.lib.stride_tricks.sliding_window_view(doubled, 9, axis=1)
    return windows.all(axis=2).any(axis=1)


def _detect_arrays(pixels: np.ndarray, cfg: FeatureConfig):
    """FAST-9 + NMS; returns (xs, ys, responses) in raster order."""
    h, w = pixels.shape
    if h < 7 or w < 7:
        return (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.float64))
    px = pixels.astype(np.int32)
    center = px[3 : h - 3, 3 : w - 3]
    t = cfg.fast_threshold
    ih, iw = center.shape

    bright_mask = np.zeros((ih, iw), dtype=np.uint16)
    dark_mask = np.zeros((ih, iw), dtype=np.uint16)
    bright_sum = np.zeros((ih, iw), dtype=np.int32)
    dark_sum = np.zeros((ih, iw), dtype=np.int32)
    for i, (dx, dy) in enumerate(_CIRCLE):
        ring = px[3 + dy : 3 + dy + ih, 3 + dx : 3 + dx + iw]
        diff = ring - center
        bright_mask |= (diff > t).astype(np.uint16) << i
        dark_mask |= (-diff > t).astype(np.uint16) << i
        np.add(bright_sum, np.maximum(diff - t, 0), out=bright_sum)
        np.add(dark_sum, np.maximum(-diff - t, 0), out=dark_sum)

    lut = _arc_lut()
    corner = lut[bright_mask] | lut[dark_mask]
    if not corner.any():
        return (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.float64))
    response = np.maximum(bright_sum, dark_sum)

    # 3x3 NMS. Raster-order plateau rule: strict > against the four
    # neighbors that precede the pixel, >= against the four that follow.
    score = np.where(corner, response, -1)
    padded = np.full((ih + 2, iw + 2), -1, dtype=np.int64)
    padded[1:-1, 1:-1] = score

    def nb(dy, dx):
        return padded[1 + dy : 1 + dy + ih, 1 + dx : 1 + dx + iw]

    keep = (
        corner
        & (score > nb(-1, -1))
        & (score > nb(-1, 0))
        & (score > nb(-1, 1))
        & (score > nb(0, -1))
        & (score >= nb(0, 1))
        & (score >= nb(1, -1))
        & (score >= nb(1, 0))
        & (score >= nb(1, 1))
    )

    ys, xs = np.nonzero(keep)
    xs = xs + 3
    ys = ys + 3
    r = cfg.patch_radius
    ok = (xs >= r) & (xs <= w - 1 - r) & (ys >= r) & (ys <= h - 1 - r)
    xs, ys = xs[ok], ys[ok]
    resp = response[ys - 3, xs - 3].astype(np.float64)
    return xs, ys, resp


def detect_corners(level: GrayImage, cfg: FeatureConfig) -> list[Keypoint]:
    """Segment-test corners on one pyramid level, NMS applied, border-safe.

    Positions are level-local; octave is left at 0 for the caller to set.
    """
    xs, ys, resp = _detect_arrays(level.pixels, cfg)
    return [
        Keypoint(x=float(x), y=float(y), octave=0, orientation=0.0, response=float(v))
        for x, y, v in zip(xs, ys, resp)
    ]


@functools.cache
def _disc_offsets(radius: int):
    span = np.arange(-radius, radius + 1)
    dx, dy = np.meshgrid(span, span)
    mask = dx * dx + dy * dy <= radius * radius
    return dx[mask].ravel(), dy[mask].ravel()


def _orientations(pixels: np.ndarray, xs: np.ndarray, ys: np.ndarray, radius: int) -> np.ndarray:
    """Intensity-centroid angles, vectorized over keypoints. [0, 2*pi)."""
    if xs.size == 0:
        return np.zeros(0, dtype=np.float64)
    dx, dy = _disc_offsets(radius)
    rows = ys[:, None] + dy[None, :]
    cols = xs[:, None] + dx[None, :]
    patch = pixels[rows, cols].astype(np.float64)
    m10 = patch @ dx.astype(np.float64)
    m01 = patch @ dy.astype(np.float64)
    theta = np.arctan2(m01, m10)
    theta = np.where((m01 == 0.0) & (m10 == 0.0), 0.0, theta)
    theta = np.where(theta < 0.0, theta + 2.0 * np.pi, theta)
    return np.where(theta >= 2.0 * np.pi, 0.0, theta)


def compute_orientation(level: GrayImage, kp: Keypoint, cfg: FeatureConfig) -> float:
    """Angle of the patch intensity centroid; 0 for symmetric patches."""
    x, y = int(round(kp.x)), int(round(kp.y))
    r = cfg.patch_radius
    if not (r <= x <= level.width - 1 - r and r <= y <= level.height - 1 - r):
        raise ValueError(f"keypoint ({kp.x}, {kp.y}) patch leaves the image")
    return float(_orientations(level.pixels, np.array([x]), np.array([y]), r)[0])


def smooth_for_descriptor(pixels: np.ndarray) -> np.ndarray:
    """5x5 rounded box mean with edge replication; exact integer math.

    Point-pair comparisons on raw pixels are brittle under resampling;
    descriptors sample this smoothed image instead. Detection and
    orientation stay on the raw image.
    """
    padded = np.pad(pixels, 2, mode="edge").astype(np.uint32)
    summed = padded.cumsum(axis=0).cumsum(axis=1)
    summed = np.pad(summed, ((1, 0), (1, 0)))
    h, w = pixels.shape
    win = (
        summed[5 : 5 + h, 5 : 5 + w]
        - summed[0:h, 5 : 5 + w]
        - summed[5 : 5 + h, 0:w]
        + summed[0:h, 0:w]
    )
    return ((win + 12) // 25).astype(np.uint8)


@functools.cache
def _brief_pattern(seed: int, radius: int) -> np.ndarray:
    """(256, 2, 2) float comparison-point offsets, all within the disc.

    Gaussian with sigma radius/2, rejection-resampled until every point
    lies inside radius. Frozen per (seed, radius).
    """
    rng = np.random.default_rng(seed)
    pts = rng.normal(0.0, radius / 2.0, size=(256, 2, 2))
    while True:
        bad = np.linalg.norm(pts, axis=2) > radius
        if not bad.any():
            break
        pts[bad] = rng.normal(0.0, radius / 2.0, size=(int(bad.sum()), 2))
    pts.setflags(write=False)
    return pts


def _descriptors(
    pixels: np.ndarray,
    xs: np.ndarray,
    ys: np.ndarray,
    thetas: np.ndarray,
    pattern: np.ndarray,
) -> np.ndarray:
    """Steered binary descriptors; (n, 32) uint8, big-endian bit packing."""
    n = xs.size
    if n == 0:
        return np.zeros((0, 32), dtype=np.uint8)
    c = np.cos(thetas)[:, None]
    s = np.sin(thetas)[:, None]
    out_bits = np.empty((n, 256), dtype=np.uint8)

    px_off, py_off = pattern[:, 0, 0][None, :], pattern[:, 0, 1][None, :]
    qx_off, qy_off = pattern[:, 1, 0][None, :], pattern[:, 1, 1][None, :]

    def sample(ox, oy):
        rx = np.rint(ox * c - oy * s).astype(np.int64)
        ry = np.rint(ox * s + oy * c).astype(np.int64)
        return pixels[ys[:, None] + ry, xs[:, None] + rx]

    ip = sample(px_off, py_off)
    iq = sample(qx_off, qy_off)
    np.less(ip, iq, out=out_bits.view(bool))
    return np.packbits(out_bits, axis=1)


def compute_descriptor(level: GrayImage, kp: Keypoint, cfg: FeatureConfig) -> np.ndarray:
    """256-bit descriptor for one keypoint (orientation already assigned)."""
    x, y = int(round(kp.x)), int(round(kp.y))
    r = cfg.patch_radius
    if not (r <= x <= level.width - 1 - r and r <= y <= level.height - 1 - r):
        raise ValueError(f"keypoint ({kp.x}, {kp.y}) patch leaves the image")
    pattern = _brief_pattern(cfg.descriptor_pattern_seed, cfg.patch_radius)
    return _descriptors(
        smooth_for_descriptor(level.pixels),
        np.array([x]),
        np.array([y]),
        np.array([kp.orientation]),
        pattern,
    )[0]


def extract_features(img, cfg: FeatureConfig) -> tuple[list[Keypoint], np.ndarray]:
    """Detect, orient, and describe up to target_keypoints corners.

    Accepts a GrayImage or a uint8 array (2-D grayscale or 3-D color).
    Keypoint positions are mapped back to full-resolution coordinates;
    row i of the returned (n, 32) uint8 matrix describes keypoint i.
    Output is sorted by descending response (ties: octave, y, x).
    """
    gray = img if isinstance(img, GrayImage) else GrayImage.from_array(np.asarray(img))
    pyramid = build_pyramid(gray, cfg)

    all_x, all_y, all_resp, all_oct = [], [], [], []
    for octave, level in enumerate(pyramid.levels):
        xs, ys, resp = _detect_arrays(level.pixels, cfg)
        all_x.append(xs)
        all_y.append(ys)
        all_resp.append(resp)
        all_oct.append(np.full(xs.size, octave, dtype=np.int64))

    xs = np.concatenate(all_x)
    ys = np.concatenate(all_y)
    resp = np.concatenate(all_resp)
    octs = np.concatenate(all_oct)
    if xs.size == 0:
        return [], np.zeros((0, 32), dtype=np.uint8)

    order = np.lexsort((xs, ys, octs, -resp))[: cfg.target_keypoints]
    xs, ys, resp, octs = xs[order], ys[order], resp[order], octs[order]

    n = xs.size
    thetas = np.empty(n, dtype=np.float64)
    descs = np.empty((n, 32), dtype=np.uint8)
    pattern = _brief_pattern(cfg.descriptor_pattern_seed, cfg.patch_radius)
    gx = np.empty(n, dtype=np.float64)
    gy = np.empty(n, dtype=np.float64)
    for octave, level in enumerate(pyramid.levels):
        idx = np.nonzero(octs == octave)[0]
        if idx.size == 0:
            continue
        lx, ly = xs[idx], ys[idx]
        th = _orientations(level.pixels, lx, ly, cfg.patch_radius)
        thetas[idx] = th
        descs[idx] = _descriptors(smooth_for_descriptor(level.pixels), lx, ly, th, pattern)
        # half-pixel-center mapping back to the base image, per axis
        sx = gray.width / level.width
        sy = gray.height / level.height
        gx[idx] = (lx + 0.5) * sx - 0.5
        gy[idx] = (ly + 0.5) * sy - 0.5

    keypoints = [
        Keypoint(
            x=float(gx[i]),
            y=float(gy[i]),
            octave=int(octs[i]),
            orientation=float(thetas[i]),
            response=float(resp[i]),
        )
        for i in range(n)
    ]
    return keypoints, descs


@functools.cache
def _popcount_table() -> np.ndarray:
    return np.unpackbits(np.arange(256, dtype=np.uint8)[:, None], axis=1).sum(axis=1)


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    """Differing-bit count between two 32-byte descriptors."""
    a = np.asarray(a, dtype=np.uint8).ravel()
    b = np.asarray(b, dtype=np.uint8).ravel()
    if a.shape != b.shape:
        raise ValueError(f"descriptor shapes differ: {a.shape} vs {b.shape}")
    return int(_popcount_table()[np.bitwise_xor(a, b)].sum())


def hamming_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All-pairs Hamming distances, (len(a), len(b)) int32.

    Expands to bit planes and uses one matrix product:
    |x XOR y| = |x| + |y| - 2 x.y. Exact: every value is a small integer
    well inside float32's integer range.
    """
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"expected (n, k) descriptor matrices, got {a.shape} and {b.shape}")
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]), dtype=np.int32)
    bits_a = np.unpackbits(a, axis=1).astype(np.float32)
    bits_b = np.unpackbits(b, axis=1).astype(np.float32)
    pop_a = bits_a.sum(axis=1, keepdims=True)
    pop_b = bits_b.sum(axis=1, keepdims=True)
    cross = bits_a @ bits_b.T
    return (pop_a + pop_b.T - 2.0 * cross).astype(np.int32)
