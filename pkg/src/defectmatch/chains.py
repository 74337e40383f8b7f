"""From keypoint matches to matched defects to defect chains.

A keypoint match is valid for a detection pair when both endpoints land
inside defect regions of the same class on their respective images. Pairs
whose valid-match count reaches the threshold become graph edges, and
connected components of that graph are the defect chains.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .geometry import points_in_polygon
from .matching import PairMatches
from .model import Detection, Keypoint, canonical_pair


@dataclass(frozen=True)
class MatchThresholdConfig:
    tau: int = 5

    def __post_init__(self):
        if self.tau < 1:
            raise ConfigError(f"tau must be >= 1, got {self.tau}")


@dataclass(frozen=True)
class DefectPairCount:
    """Valid-match tally for one canonical pair of defect detections."""

    detection_a: str
    detection_b: str
    valid_count: int

    def __post_init__(self):
        if self.detection_a >= self.detection_b:
            raise ValueError(
                f"detection pair must be canonical: "
                f"{self.detection_a!r} vs {self.detection_b!r}"
            )
        if self.valid_count < 0:
            raise ValueError(f"valid_count must be >= 0, got {self.valid_count}")

    @property
    def pair(self) -> tuple[str, str]:
        return (self.detection_a, self.detection_b)


@dataclass(frozen=True)
class DefectMatchGraph:
    nodes: tuple[str, ...]
    edges: tuple[DefectPairCount, ...]

    def __post_init__(self):
        node_set = set(self.nodes)
        if len(node_set) != len(self.nodes):
            raise ValueError("graph nodes must be unique")
        seen = set()
        for edge in self.edges:
            if edge.detection_a not in node_set or edge.detection_b not in node_set:
                raise ValueError(f"edge {edge.pair} references unknown node")
            if edge.pair in seen:
                raise ValueError(f"duplicate edge {edge.pair}")
            seen.add(edge.pair)


@dataclass(frozen=True)
class DefectChain:
    chain_id: str
    members: frozenset[str]

    def __post_init__(self):
        if not self.members:
            raise ValueError("chain must have at least one member")
        object.__setattr__(self, "members", frozenset(self.members))
        if self.chain_id != min(self.members):
            raise ValueError("chain_id must be the lowest member detection id")

    @property
    def size(self) -> int:
        return len(self.members)


def _endpoint_array(matches, kps, side: str) -> np.ndarray:
    pts = np.empty((len(matches), 2))
    for row, m in enumerate(matches):
        idx = m.kp_index_a if side == "a" else m.kp_index_b
        if not 0 <= idx < len(kps):
            raise ValueError(f"match references keypoint {idx} outside image {side}")
        kp = kps[idx]
        pts[row] = (kp.x, kp.y)
    return pts


def _defect_masks(pts: np.ndarray, detections: Sequence[Detection], image_id: str):
    """Per-class membership masks: label -> list of (detection, bool row)."""
    by_label: dict[str, list[tuple[Detection, np.ndarray]]] = {}
    for det in detections:
        if det.image_id != image_id:
            raise ValueError(
                f"detection {det.detection_id!r} belongs to {det.image_id!r}, "
                f"not {image_id!r}"
            )
        if det.category != "defect":
            continue
        inside = points_in_polygon(pts, det.region_array())
        by_label.setdefault(det.class_label, []).append((det, inside))
    return by_label


def count_valid_matches(
    pm: PairMatches,
    kps_a: Sequence[Keypoint],
    kps_b: Sequence[Keypoint],
    dets_a: Sequence[Detection],
    dets_b: Sequence[Detection],
) -> list[DefectPairCount]:
    """Count, per same-class defect pair, the matches with both endpoints
    inside the pair's regions.

    Overlapping defect regions can each claim the same endpoint, so one
    match may increment several pairs. Endpoints outside every defect
    contribute nothing.
    """
    if not pm.matches:
        return []
    pts_a = _endpoint_array(pm.matches, kps_a, "a")
    pts_b = _endpoint_array(pm.matches, kps_b, "b")
    masks_a = _defect_masks(pts_a, dets_a, pm.image_a)
    masks_b = _defect_masks(pts_b, dets_b, pm.image_b)

    out = []
    for label in sorted(set(masks_a) & set(masks_b)):
        rows_a = masks_a[label]
        rows_b = masks_b[label]
        mat_a = np.stack([m for _, m in rows_a]).astype(np.int64)
        mat_b = np.stack([m for _, m in rows_b]).astype(np.int64)
        counts = mat_a @ mat_b.T
        for i, (det_a, _) in enumerate(rows_a):
            for j, (det_b, _) in enumerate(rows_b):
                n = int(counts[i, j])
                if n > 0:
                    lo, hi = canonical_pair(det_a.detection_id, det_b.detection_id)
                    out.append(DefectPairCount(lo, hi, n))
    out.sort(key=lambda c: c.pair)
    return out


def accumulate_counts(
    per_pair: Iterable[tuple[tuple[str, str], Iterable[DefectPairCount]]],
) -> list[DefectPairCount]:
    """Merge per-image-pair counts into one table keyed by detection pair.

    Submitting the same image pair twice would double-count its matches,
    so it is rejected. The merge is commutative: submission order does
    not affect the result.
    """
    seen_pairs = set()
    totals: dict[tuple[str, str], int] = {}
    for (image_x, image_y), counts in per_pair:
        pair = canonical_pair(image_x, image_y)
        if pair in seen_pairs:
            raise DataError(f"image pair {pair} submitted more than once")
        seen_pairs.add(pair)
        for count in counts:
            totals[count.pair] = totals.get(count.pair, 0) + count.valid_count
    return [
        DefectPairCount(a, b, n) for (a, b), n in sorted(totals.items())
    ]


def build_graph(
    table: Iterable[DefectPairCount],
    cfg: MatchThresholdConfig,
    detections: Iterable[Detection],
) -> DefectMatchGraph:
    """Threshold the count table into an undirected graph over every
    defect detection; detections matched nowhere stay as isolated nodes.
    """
    nodes = sorted(
        {det.detection_id for det in detections if det.category == "defect"}
    )
    edges = sorted(
        (c for c in table if c.valid_count >= cfg.tau), key=lambda c: c.pair
    )
    return DefectMatchGraph(nodes=tuple(nodes), edges=tuple(edges))


class UnionFind:
    def __init__(self, items: Iterable[str]):
        self.parent = {item: item for item in items}
        self.rank = {item: 0 for item in self.parent}

    def find(self, item: str) -> str:
        root = item
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[item] != root:
            self.parent[item], item = root, self.parent[item]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1


def build_chains(graph: DefectMatchGraph) -> list[DefectChain]:
    """Connected components of the match graph, singletons included.

    Chains partition the node set; each takes its lowest member id as
    chain_id. Output sorted by chain_id.
    """
    uf = UnionFind(graph.nodes)
    for edge in graph.edges:
        uf.union(edge.detection_a, edge.detection_b)
    groups: dict[str, set[str]] = {}
    for node in graph.nodes:
        groups.setdefault(uf.find(node), set()).add(node)
    chains = [
        DefectChain(chain_id=min(members), members=frozenset(members))
        for members in groups.values()
    ]
    chains.sort(key=lambda c: c.chain_id)
    return chains
