"""Small image fixtures for feature and matching tests.

Kept independent of the package's own synthetic generator so the two
can cross-check each other.
"""

from __future__ import annotations

import numpy as np


def value_noise(rng, height: int, width: int, cells=(32, 8), amplitudes=(70.0, 35.0),
                base: float = 128.0) -> np.ndarray:
    """Multi-scale smooth random texture, uint8."""
    out = np.full((height, width), base, dtype=np.float64)
    for cell, amp in zip(cells, amplitudes):
        gh = height // cell + 2
        gw = width // cell + 2
        grid = rng.uniform(-amp, amp, size=(gh, gw))
        ys = np.arange(height) / cell
        xs = np.arange(width) / cell
        y0 = ys.astype(np.int64)
        x0 = xs.astype(np.int64)
        fy = (ys - y0)[:, None]
        fx = (xs - x0)[None, :]
        tl = grid[np.ix_(y0, x0)]
        tr = grid[np.ix_(y0, x0 + 1)]
        bl = grid[np.ix_(y0 + 1, x0)]
        br = grid[np.ix_(y0 + 1, x0 + 1)]
        top = tl * (1 - fx) + tr * fx
        bot = bl * (1 - fx) + br * fx
        out += top * (1 - fy) + bot * fy
    return np.clip(out, 0, 255).astype(np.uint8)


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                    fill: float = 0.0) -> np.ndarray:
    """Sample img at float coordinates; outside pixels get fill."""
    h, w = img.shape
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    valid = (x0 >= 0) & (y0 >= 0) & (x0 <= w - 2) & (y0 <= h - 2)
    x0c = np.clip(x0, 0, w - 2)
    y0c = np.clip(y0, 0, h - 2)
    tl = img[y0c, x0c].astype(np.float64)
    tr = img[y0c, x0c + 1].astype(np.float64)
    bl = img[y0c + 1, x0c].astype(np.float64)
    br = img[y0c + 1, x0c + 1].astype(np.float64)
    top = tl * (1 - fx) + tr * fx
    bot = bl * (1 - fx) + br * fx
    out = top * (1 - fy) + bot * fy
    return np.where(valid, out, fill)


def rotate_image(img: np.ndarray, angle: float, center: tuple[float, float]) -> np.ndarray:
    """Rotate by angle radians about center.

    Output pixel (x, y) samples the input at the inverse-rotated
    location, so content rotates by +angle under the convention where
    +angle turns +x toward +y.
    """
    h, w = img.shape
    cy, cx = center[1], center[0]
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx = xx - cx
    dy = yy - cy
    c, s = np.cos(-angle), np.sin(-angle)
    src_x = cx + dx * c - dy * s
    src_y = cy + dx * s + dy * c
    vals = bilinear_sample(img, src_x, src_y, fill=128.0)
    return np.clip(np.rint(vals), 0, 255).astype(np.uint8)


def translate_image(img: np.ndarray, dx: int, dy: int, fill: int = 128) -> np.ndarray:
    """Integer-pixel translation (exact, no resampling)."""
    out = np.full_like(img, fill)
    h, w = img.shape
    src = img[max(0, -dy) : h - max(0, dy), max(0, -dx) : w - max(0, dx)]
    out[max(0, dy) : max(0, dy) + src.shape[0], max(0, dx) : max(0, dx) + src.shape[1]] = src
    return out
