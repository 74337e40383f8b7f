"""Brute-force descriptor matching per image pair, with Lowe-style ratio
filtering, mutual-nearest cross-checking, and optional RANSAC homography
verification.

Randomness for verification derives from (config seed, image pair), so
results do not depend on scheduling or worker count.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .features import hamming_matrix
from .model import Keypoint, KeypointMatch


@dataclass(frozen=True)
class MatchConfig:
    ratio: float = 0.8
    cross_check: bool = True
    max_distance: int = 96
    ransac_enabled: bool = True
    ransac_iters: int = 2000
    ransac_inlier_px: float = 3.0
    ransac_min_matches: int = 12
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.ratio <= 1.0:
            raise ConfigError(f"ratio must lie in (0, 1], got {self.ratio}")
        if self.max_distance <= 0:
            raise ConfigError(f"max_distance must be positive, got {self.max_distance}")
        if self.ransac_iters < 1:
            raise ConfigError(f"ransac_iters must be >= 1, got {self.ransac_iters}")
        if self.ransac_inlier_px <= 0:
            raise ConfigError(
                f"ransac_inlier_px must be positive, got {self.ransac_inlier_px}"
            )
        if self.ransac_min_matches < 4:
            raise ConfigError(
                f"ransac_min_matches must be >= 4 (homography needs 4 points), "
                f"got {self.ransac_min_matches}"
            )


@dataclass(frozen=True, eq=False)
class PairMatches:
    image_a: str
    image_b: str
    matches: tuple[KeypointMatch, ...]
    verified: bool = False
    homography: np.ndarray | None = None


def _ratio_pass(best: np.ndarray, second: np.ndarray | None, ratio: float,
                max_distance: int) -> np.ndarray:
    ok = best <= max_distance
    if second is None:
        return ok
    # second distance 0 forces best 0; such exact duplicates stay
    return ok & ((second == 0) | (best < ratio * second))


def match_descriptors(
    image_a: str,
    desc_a: np.ndarray,
    image_b: str,
    desc_b: np.ndarray,
    cfg: MatchConfig,
) -> list[KeypointMatch]:
    """Exhaustive Hamming matching from a to b.

    Nearest neighbors tie to the lowest index. With cross_check the ratio
    test runs in both directions and only mutual nearest neighbors
    survive, making the result symmetric under swapping the inputs.
    """
    desc_a = np.asarray(desc_a, dtype=np.uint8).reshape(-1, 32)
    desc_b = np.asarray(desc_b, dtype=np.uint8).reshape(-1, 32)
    na, nb = desc_a.shape[0], desc_b.shape[0]
    if na == 0 or nb == 0:
        return []

    dists = hamming_matrix(desc_a, desc_b)
    fwd_nn = dists.argmin(axis=1)
    fwd_best = dists[np.arange(na), fwd_nn]
    fwd_second = np.partition(dists, 1, axis=1)[:, 1] if nb >= 2 else None
    fwd_ok = _ratio_pass(fwd_best, fwd_second, cfg.ratio, cfg.max_distance)

    if cfg.cross_check:
        bwd_nn = dists.argmin(axis=0)
        bwd_best = dists[bwd_nn, np.arange(nb)]
        bwd_second = np.partition(dists, 1, axis=0)[1, :] if na >= 2 else None
        bwd_ok = _ratio_pass(bwd_best, bwd_second, cfg.ratio, cfg.max_distance)
        keep = fwd_ok & bwd_ok[fwd_nn] & (bwd_nn[fwd_nn] == np.arange(na))
    else:
        keep = fwd_ok

    out = [
        KeypointMatch(
            image_a=image_a,
            image_b=image_b,
            kp_index_a=int(i),
            kp_index_b=int(fwd_nn[i]),
            distance=int(fwd_best[i]),
        )
        for i in np.nonzero(keep)[0]
    ]
    out.sort(key=lambda m: (m.kp_index_a, m.kp_index_b))
    return out


def pair_seed(seed: int, image_a: str, image_b: str) -> int:
    """Stable per-pair RANSAC seed; independent of process hashing."""
    digest = hashlib.sha256(f"{seed}|{image_a}|{image_b}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _normalize_points(pts: np.ndarray):
    """Hartley normalization per batch entry: center, scale to mean
    distance sqrt(2). pts is (m, 4, 2); returns transformed points and
    the (m, 3, 3) transforms.
    """
    m = pts.shape[0]
    centroid = pts.mean(axis=1, keepdims=True)
    centered = pts - centroid
    mean_dist = np.linalg.norm(centered, axis=2).mean(axis=1)
    # coincident sample points give mean_dist 0; scale 1 keeps the math
    # finite and the degenerate model loses the inlier vote anyway
    safe = np.where(mean_dist > 0, mean_dist, 1.0)
    scale = np.where(mean_dist > 0, np.sqrt(2.0) / safe, 1.0)
    transforms = np.zeros((m, 3, 3))
    transforms[:, 0, 0] = scale
    transforms[:, 1, 1] = scale
    transforms[:, 2, 2] = 1.0
    transforms[:, 0, 2] = -scale * centroid[:, 0, 0]
    transforms[:, 1, 2] = -scale * centroid[:, 0, 1]
    return centered * scale[:, None, None], transforms


def _batched_dlt(pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    """Direct linear transform on (m, 4, 2) correspondence batches.

    Returns (m, 3, 3) homographies mapping a to b (denormalized).
    """
    m = pa.shape[0]
    na, ta = _normalize_points(pa)
    nb, tb = _normalize_points(pb)
    a_mat = np.zeros((m, 8, 9))
    x, y = na[:, :, 0], na[:, :, 1]
    u, v = nb[:, :, 0], nb[:, :, 1]
    rows_even = np.stack(
        [-x, -y, -np.ones_like(x), np.zeros_like(x), np.zeros_like(x),
         np.zeros_like(x), u * x, u * y, u],
        axis=2,
    )
    rows_odd = np.stack(
        [np.zeros_like(x), np.zeros_like(x), np.zeros_like(x), -x, -y,
         -np.ones_like(x), v * x, v * y, v],
        axis=2,
    )
    a_mat[:, 0::2, :] = rows_even
    a_mat[:, 1::2, :] = rows_odd
    _, _, vt = np.linalg.svd(a_mat)
    h_norm = vt[:, -1, :].reshape(m, 3, 3)
    # denormalize: H = inv(T_b) @ Hn @ T_a; T_b structure inverts in closed form
    inv_tb = np.zeros_like(tb)
    inv_tb[:, 0, 0] = 1.0 / tb[:, 0, 0]
    inv_tb[:, 1, 1] = 1.0 / tb[:, 1, 1]
    inv_tb[:, 2, 2] = 1.0
    inv_tb[:, 0, 2] = -tb[:, 0, 2] / tb[:, 0, 0]
    inv_tb[:, 1, 2] = -tb[:, 1, 2] / tb[:, 1, 1]
    return inv_tb @ h_norm @ ta


def find_homography_ransac(
    pts_a: np.ndarray,
    pts_b: np.ndarray,
    iters: int,
    inlier_px: float,
    rng: np.random.Generator,
):
    """Seeded RANSAC over 4-point minimal samples.

    Returns (homography, inlier_mask) for the iteration with the most
    inliers (first such iteration on ties), or (None, None) when no
    sample yields at least 4 inliers.
    """
    n = pts_a.shape[0]
    if n < 4:
        return None, None
    samples = np.argpartition(rng.random((iters, n)), 3, axis=1)[:, :4]
    h_all = _batched_dlt(pts_a[samples], pts_b[samples])

    ones = np.ones((n, 1))
    a_h = np.concatenate([pts_a, ones], axis=1)
    tol2 = float(inlier_px) ** 2
    best_count = -1
    best_iter = -1
    best_mask = None
    chunk = 256
    with np.errstate(divide="ignore", invalid="ignore"):
        for start in range(0, iters, chunk):
            h_c = h_all[start : start + chunk]
            proj = h_c @ a_h.T  # (c, 3, n)
            w = proj[:, 2, :]
            px = proj[:, 0, :] / w
            py = proj[:, 1, :] / w
            err2 = (px - pts_b[:, 0]) ** 2 + (py - pts_b[:, 1]) ** 2
            err2 = np.where(np.isfinite(err2), err2, np.inf)
            inliers = err2 <= tol2
            counts = inliers.sum(axis=1)
            local_best = int(counts.argmax())
            if counts[local_best] > best_count:
                best_count = int(counts[local_best])
                best_iter = start + local_best
                best_mask = inliers[local_best].copy()
    if best_count < 4:
        return None, None
    h_best = h_all[best_iter]
    scale = h_best[2, 2]
    if abs(scale) > 1e-12:
        h_best = h_best / scale
    return h_best, best_mask


def geometric_verify(
    pm: PairMatches,
    kps_a: list[Keypoint],
    kps_b: list[Keypoint],
    cfg: MatchConfig,
) -> PairMatches:
    """RANSAC-verify a match set against a planar homography model.

    Pass-through (verified=False) when disabled, when fewer than
    ransac_min_matches matches exist, or when no model reaches 4 inliers;
    never raises on degeneracy. Output matches are a subset of the input.
    """
    if not cfg.ransac_enabled or len(pm.matches) < cfg.ransac_min_matches:
        return replace(pm, verified=False)
    pts_a = np.array([(kps_a[m.kp_index_a].x, kps_a[m.kp_index_a].y) for m in pm.matches])
    pts_b = np.array([(kps_b[m.kp_index_b].x, kps_b[m.kp_index_b].y) for m in pm.matches])
    rng = np.random.default_rng(pair_seed(cfg.seed, pm.image_a, pm.image_b))
    homography, mask = find_homography_ransac(
        pts_a, pts_b, cfg.ransac_iters, cfg.ransac_inlier_px, rng
    )
    if homography is None:
        return replace(pm, verified=False)
    retained = tuple(m for m, keep in zip(pm.matches, mask) if keep)
    return PairMatches(
        image_a=pm.image_a,
        image_b=pm.image_b,
        matches=retained,
        verified=True,
        homography=homography,
    )
