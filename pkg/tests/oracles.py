"""Slow reference implementations for cross-checking the fast library paths.

Everything here favors obviousness over speed: scalar loops, no shared
code with the package beyond documented conventions (circle offsets,
tie rules) that both sides must agree on by contract.
"""

from __future__ import annotations

from collections import deque

import numpy as np


def point_in_polygon_oracle(px: float, py: float, vertices) -> bool:
    """Ray casting, boundary-inclusive, edge owns its lower-y endpoint."""
    verts = [(float(x), float(y)) for x, y in vertices]
    n = len(verts)
    for i in range(n):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % n]
        cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        if cross == 0.0:
            if min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by):
                return True
    inside = False
    for i in range(n):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % n]
        if (ay <= py < by) or (by <= py < ay):
            t = (py - ay) / (by - ay)
            x_int = ax + t * (bx - ax)
            if px < x_int:
                inside = not inside
    return inside


def polygon_area_oracle(vertices) -> float:
    verts = [(float(x), float(y)) for x, y in vertices]
    total = 0.0
    n = len(verts)
    for i in range(n):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % n]
        total += ax * by - bx * ay
    return abs(total) / 2.0


def hamming_oracle(a: bytes, b: bytes) -> int:
    """Per-bit comparison loop over two 32-byte descriptors."""
    assert len(a) == len(b)
    count = 0
    for byte_a, byte_b in zip(a, b):
        for bit in range(8):
            if ((byte_a >> bit) & 1) != ((byte_b >> bit) & 1):
                count += 1
    return count


def _row_distance(a_row: np.ndarray, b_row: np.ndarray) -> int:
    xa = int.from_bytes(a_row.tobytes(), "big")
    xb = int.from_bytes(b_row.tobytes(), "big")
    return (xa ^ xb).bit_count()


def match_oracle(desc_a: np.ndarray, desc_b: np.ndarray, ratio: float,
                 cross_check: bool, max_distance: int) -> set:
    """Double-loop matcher: nearest/second-nearest scan, Lowe ratio with the
    second-distance-zero carve-out, optional mutual-nearest check.

    Returns a set of (index_a, index_b, distance) triples.
    """
    na, nb = desc_a.shape[0], desc_b.shape[0]
    if na == 0 or nb == 0:
        return set()

    dist = [[_row_distance(desc_a[i], desc_b[j]) for j in range(nb)] for i in range(na)]

    def scan(row):
        best_j, best_d, second_d = -1, None, None
        for j, d in enumerate(row):
            if best_d is None or d < best_d:
                second_d = best_d
                best_d, best_j = d, j
            elif second_d is None or d < second_d:
                second_d = d
        passes = best_d <= max_distance and (
            second_d is None or second_d == 0 or best_d < ratio * second_d
        )
        return best_j, best_d, passes

    forward = [scan(dist[i]) for i in range(na)]
    if not cross_check:
        return {(i, j, d) for i, (j, d, ok) in enumerate(forward) if ok}

    backward = [scan([dist[i][j] for i in range(na)]) for j in range(nb)]
    out = set()
    for i, (j, d, ok_f) in enumerate(forward):
        if not ok_f:
            continue
        back_i, _, ok_b = backward[j]
        if ok_b and back_i == i:
            out.add((i, j, d))
    return out


def bfs_components_oracle(nodes, edges) -> set:
    """Connected components by breadth-first flood fill.

    Returns a set of frozensets of node ids.
    """
    adjacency = {n: set() for n in nodes}
    for a, b in edges:
        adjacency[a].add(b)
        adjacency[b].add(a)
    seen = set()
    components = set()
    for start in nodes:
        if start in seen:
            continue
        queue = deque([start])
        seen.add(start)
        comp = {start}
        while queue:
            cur = queue.popleft()
            for nxt in adjacency[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    comp.add(nxt)
                    queue.append(nxt)
        components.add(frozenset(comp))
    return components


def count_valid_oracle(matches, kps_a, kps_b, dets_a, dets_b) -> dict:
    """Triple loop over (match, defect_a, defect_b) applying the same-class
    containment rule. Returns {(det_id_a, det_id_b): count}.
    """
    defects_a = [d for d in dets_a if d.category == "defect"]
    defects_b = [d for d in dets_b if d.category == "defect"]
    counts: dict = {}
    for m in matches:
        kp_a = kps_a[m.kp_index_a]
        kp_b = kps_b[m.kp_index_b]
        for da in defects_a:
            if not point_in_polygon_oracle(kp_a.x, kp_a.y, da.region):
                continue
            for db in defects_b:
                if da.class_label != db.class_label:
                    continue
                if point_in_polygon_oracle(kp_b.x, kp_b.y, db.region):
                    key = (da.detection_id, db.detection_id)
                    counts[key] = counts.get(key, 0) + 1
    return counts


def nearest_centroid_oracle(descriptors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Exhaustive nearest-centroid assignment, ties to the lowest index.

    Distances computed by XOR + unpacked-bit summation, chunked so full
    datasets stay tractable. Independent of the library's matmul path.
    """
    n = descriptors.shape[0]
    out = np.empty(n, dtype=np.int64)
    chunk = 512
    for start in range(0, n, chunk):
        block = descriptors[start : start + chunk]
        xored = block[:, None, :] ^ centroids[None, :, :]
        dists = np.unpackbits(xored, axis=2).sum(axis=2, dtype=np.int32)
        out[start : start + chunk] = dists.argmin(axis=1)
    return out


# FAST circle: 16 (dx, dy) offsets at radius 3, written out literally.
FAST_CIRCLE = [
    (0, -3), (1, -3), (2, -2), (3, -1),
    (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1),
    (-3, 0), (-3, -1), (-2, -2), (-1, -3),
]


def segment_test_oracle(pixels: np.ndarray, x: int, y: int, threshold: int) -> bool:
    """Exhaustive FAST-9 segment test at one pixel.

    True when some contiguous arc of >= 9 circle pixels is uniformly
    brighter than center + threshold or darker than center - threshold.
    """
    h, w = pixels.shape
    if x < 3 or y < 3 or x >= w - 3 or y >= h - 3:
        return False
    center = int(pixels[y, x])
    brighter = []
    darker = []
    for dx, dy in FAST_CIRCLE:
        v = int(pixels[y + dy, x + dx])
        brighter.append(v > center + threshold)
        darker.append(v < center - threshold)
    for flags in (brighter, darker):
        doubled = flags + flags
        run = 0
        for f in doubled:
            run = run + 1 if f else 0
            if run >= 9:
                return True
    return False


def orientation_oracle(pixels: np.ndarray, x: int, y: int, radius: int) -> float:
    """Intensity-centroid angle by brute-force moment summation."""
    m10 = 0.0
    m01 = 0.0
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dx * dx + dy * dy > radius * radius:
                continue
            v = float(pixels[y + dy, x + dx])
            m10 += dx * v
            m01 += dy * v
    if m10 == 0.0 and m01 == 0.0:
        return 0.0
    angle = np.arctan2(m01, m10)
    if angle < 0.0:
        angle += 2.0 * np.pi
    if angle >= 2.0 * np.pi:
        angle = 0.0
    return float(angle)


def descriptor_oracle(pixels: np.ndarray, x: int, y: int, angle: float,
                      pattern: np.ndarray) -> bytes:
    """Scalar recomputation of the 256-bit descriptor.

    pattern is (256, 2, 2) float offsets; rotation then round-half-even
    per axis, bit set when intensity(p) < intensity(q).
    """
    c, s = np.cos(angle), np.sin(angle)
    bits = []
    for i in range(pattern.shape[0]):
        (px_off, py_off), (qx_off, qy_off) = pattern[i]
        rpx = round(px_off * c - py_off * s)
        rpy = round(px_off * s + py_off * c)
        rqx = round(qx_off * c - qy_off * s)
        rqy = round(qx_off * s + qy_off * c)
        ip = int(pixels[y + int(rpy), x + int(rpx)])
        iq = int(pixels[y + int(rqy), x + int(rqx)])
        bits.append(1 if ip < iq else 0)
    out = bytearray(32)
    for i, bit in enumerate(bits):
        if bit:
            out[i // 8] |= 1 << (7 - i % 8)
    return bytes(out)
