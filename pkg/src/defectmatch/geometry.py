"""2-D polygon predicates used by detection validation and keypoint tests.

Containment is boundary-inclusive: a point exactly on a polygon edge or
vertex counts as inside. Interior/exterior classification uses the
crossing-number test with the half-open edge convention (each edge owns
its lower-y endpoint), so a ray passing through a shared vertex is never
counted twice. Boundary detection uses exact floating-point comparisons
(cross product == 0), no epsilon.
"""

from __future__ import annotations

import numpy as np

Vertices = "np.ndarray | list | tuple"


def as_vertex_array(vertices) -> np.ndarray:
    """Coerce a polygon to an (n, 2) float64 array, n >= 3."""
    pts = np.asarray(vertices, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"polygon must be an (n, 2) point sequence, got shape {pts.shape}")
    if pts.shape[0] < 3:
        raise ValueError(f"polygon needs at least 3 vertices, got {pts.shape[0]}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("polygon vertices must be finite")
    return pts


def signed_area(vertices) -> float:
    pts = as_vertex_array(vertices)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_area(vertices) -> float:
    """Absolute shoelace area."""
    return abs(signed_area(vertices))


def points_in_polygon(points, vertices) -> np.ndarray:
    """Vectorized boundary-inclusive containment test.

    Args:
        points: (n, 2) array-like of query points.
        vertices: polygon vertices, (m, 2), m >= 3.

    Returns:
        Boolean array of shape (n,), True where the point is inside the
        polygon or exactly on its boundary.
    """
    poly = as_vertex_array(vertices)
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(1, 2)
    if pts.shape[0] == 0:
        return np.zeros(0, dtype=bool)

    ax, ay = poly[:, 0], poly[:, 1]
    bx, by = np.roll(ax, -1), np.roll(ay, -1)
    px = pts[:, 0][:, None]
    py = pts[:, 1][:, None]

    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    on_edge = (
        (cross == 0.0)
        & (px >= np.minimum(ax, bx))
        & (px <= np.maximum(ax, bx))
        & (py >= np.minimum(ay, by))
        & (py <= np.maximum(ay, by))
    )
    on_boundary = on_edge.any(axis=1)

    # Half-open in y: an edge crosses the horizontal ray iff py is in
    # [min(ay,by), max(ay,by)) -- horizontal edges never cross.
    upward = (ay <= py) & (by > py)
    downward = (by <= py) & (ay > py)
    crosses = upward | downward
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (py - ay) / (by - ay)
        x_at_ray = ax + t * (bx - ax)
    hits = crosses & (px < x_at_ray)
    inside = (hits.sum(axis=1) % 2).astype(bool)
    return on_boundary | inside


def point_in_region(point, vertices) -> bool:
    """Scalar form of points_in_polygon (same semantics, same code path)."""
    return bool(points_in_polygon(np.asarray(point, dtype=np.float64).reshape(1, 2), vertices)[0])


def _clip_half_plane(pts: np.ndarray, axis: int, bound: float, keep_below: bool) -> np.ndarray:
    """Sutherland-Hodgman step against an axis-aligned half-plane.

    Intersection points get the exact bound value on the clipped axis so
    the output never drifts outside the clip rectangle on that axis.
    """
    if pts.shape[0] == 0:
        return pts
    out: list[tuple[float, float]] = []
    n = pts.shape[0]
    for i in range(n):
        cur = pts[i]
        prev = pts[i - 1]
        if keep_below:
            cur_in = cur[axis] <= bound
            prev_in = prev[axis] <= bound
        else:
            cur_in = cur[axis] >= bound
            prev_in = prev[axis] >= bound
        if cur_in != prev_in:
            t = (bound - prev[axis]) / (cur[axis] - prev[axis])
            other = prev[1 - axis] + t * (cur[1 - axis] - prev[1 - axis])
            pt = [0.0, 0.0]
            pt[axis] = bound
            pt[1 - axis] = other
            out.append((pt[0], pt[1]))
        if cur_in:
            out.append((cur[0], cur[1]))
    return np.asarray(out, dtype=np.float64).reshape(-1, 2)


def clip_polygon_to_rect(vertices, width: float, height: float) -> np.ndarray:
    """Clip a simple polygon against [0, width] x [0, height].

    Returns the clipped vertex array, possibly empty. All output vertices
    are guaranteed inside the rectangle (a final clamp absorbs float
    rounding on interpolated coordinates).
    """
    pts = as_vertex_array(vertices)
    pts = _clip_half_plane(pts, 0, 0.0, keep_below=False)
    pts = _clip_half_plane(pts, 0, float(width), keep_below=True)
    pts = _clip_half_plane(pts, 1, 0.0, keep_below=False)
    pts = _clip_half_plane(pts, 1, float(height), keep_below=True)
    if pts.shape[0] == 0:
        return pts.reshape(0, 2)
    return np.clip(pts, [0.0, 0.0], [float(width), float(height)])


def _clip_convex_half_plane(pts: np.ndarray, a: np.ndarray, b: np.ndarray, orient: float) -> np.ndarray:
    if pts.shape[0] == 0:
        return pts
    edge = b - a
    # side >= 0 means inside for the given clip orientation
    side = orient * (edge[0] * (pts[:, 1] - a[1]) - edge[1] * (pts[:, 0] - a[0]))
    out: list[np.ndarray] = []
    n = pts.shape[0]
    for i in range(n):
        cur, prev = pts[i], pts[i - 1]
        cur_in = side[i] >= 0.0
        prev_in = side[i - 1] >= 0.0
        if cur_in != prev_in:
            t = side[i - 1] / (side[i - 1] - side[i])
            out.append(prev + t * (cur - prev))
        if cur_in:
            out.append(cur)
    return np.asarray(out, dtype=np.float64).reshape(-1, 2)


def clip_polygon_convex(subject, clip) -> np.ndarray:
    """Clip a simple polygon against a convex polygon (Sutherland-Hodgman).

    The clip polygon may be in either winding order. Output may be empty.
    """
    sub = as_vertex_array(subject)
    clp = as_vertex_array(clip)
    orient = 1.0 if signed_area(clp) >= 0 else -1.0
    out = sub
    n = clp.shape[0]
    for i in range(n):
        out = _clip_convex_half_plane(out, clp[i], clp[(i + 1) % n], orient)
        if out.shape[0] == 0:
            return out.reshape(0, 2)
    return out


def clean_polygon(vertices) -> np.ndarray | None:
    """Drop exactly-repeated consecutive vertices and collinear triples.

    Returns None when the polygon degenerates (< 3 vertices or zero area).
    """
    pts = np.asarray(vertices, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] >= 2:
        keep = np.any(pts != np.roll(pts, 1, axis=0), axis=1)
        pts = pts[keep]
    changed = True
    while changed and pts.shape[0] >= 3:
        prev = np.roll(pts, 1, axis=0)
        nxt = np.roll(pts, -1, axis=0)
        cross = (pts[:, 0] - prev[:, 0]) * (nxt[:, 1] - prev[:, 1]) - (
            pts[:, 1] - prev[:, 1]
        ) * (nxt[:, 0] - prev[:, 0])
        keep = cross != 0.0
        changed = not keep.all()
        pts = pts[keep]
    if pts.shape[0] < 3 or polygon_area(pts) == 0.0:
        return None
    return pts


def _orientation(p: np.ndarray, q: np.ndarray, r: np.ndarray) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _on_segment(p: np.ndarray, q: np.ndarray, r: np.ndarray) -> bool:
    """r collinear with pq assumed; is r within the pq bounding box?"""
    return (
        min(p[0], q[0]) <= r[0] <= max(p[0], q[0])
        and min(p[1], q[1]) <= r[1] <= max(p[1], q[1])
    )


def segments_intersect(p1, p2, p3, p4) -> bool:
    """True if closed segments p1p2 and p3p4 share any point."""
    d1 = _orientation(p3, p4, p1)
    d2 = _orientation(p3, p4, p2)
    d3 = _orientation(p1, p2, p3)
    d4 = _orientation(p1, p2, p4)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return True
    if d1 == 0 and _on_segment(p3, p4, p1):
        return True
    if d2 == 0 and _on_segment(p3, p4, p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, p3):
        return True
    if d4 == 0 and _on_segment(p1, p2, p4):
        return True
    return False


def is_simple_polygon(vertices) -> bool:
    """Check that no two non-adjacent edges touch and no vertex repeats."""
    try:
        pts = as_vertex_array(vertices)
    except ValueError:
        return False
    n = pts.shape[0]
    # repeated vertices (anywhere, not just consecutive) break simplicity
    if len({(float(x), float(y)) for x, y in pts}) != n:
        return False
    for i in range(n):
        a1, a2 = pts[i], pts[(i + 1) % n]
        if np.all(a1 == a2):
            return False
        for j in range(i + 1, n):
            adjacent = j == i + 1 or (i == 0 and j == n - 1)
            if adjacent:
                continue
            b1, b2 = pts[j], pts[(j + 1) % n]
            if segments_intersect(a1, a2, b1, b2):
                return False
    return True


def convex_hull(points) -> np.ndarray:
    """Convex hull of a point cloud by monotone chain, counter-clockwise,
    collinear points dropped. Needs at least 3 non-collinear points.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected (n, 2) points, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    uniq = sorted({(float(x), float(y)) for x, y in pts})
    if len(uniq) < 3:
        raise ValueError("convex hull needs at least 3 distinct points")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def half(seq):
        chain = []
        for p in seq:
            while len(chain) >= 2 and cross(chain[-2], chain[-1], p) <= 0:
                chain.pop()
            chain.append(p)
        return chain

    lower = half(uniq)
    upper = half(reversed(uniq))
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise ValueError("points are collinear, hull is degenerate")
    return np.array(hull)
