"""Scoring predicted defect matches against ground truth.

Two granularities: detection-id pairs (set arithmetic) and chains, where
a predicted chain claims a ground-truth chain when their intersection has
at least two detections and covers at least half the ground-truth chain.
Each ground-truth chain can be claimed once; evaluation order is fixed so
results are reproducible. Undefined ratios stay None rather than
collapsing to 0 or 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Collection, Iterable


@dataclass(frozen=True)
class PairwiseResult:
    tp: int
    fp: int
    fn: int
    precision: float | None
    recall: float | None


@dataclass(frozen=True)
class ChainResult:
    tp: int
    fp: int
    matched_gt: int
    total_gt: int
    precision: float | None
    recall: float | None


def _ratio(numerator: int, denominator: int) -> float | None:
    if denominator == 0:
        return None
    return numerator / denominator


def _checked_pairs(pairs: Iterable[tuple[str, str]], name: str) -> set[tuple[str, str]]:
    out = set()
    for pair in pairs:
        if len(pair) != 2:
            raise ValueError(f"{name} contains a non-pair entry: {pair!r}")
        a, b = pair
        if a == b:
            raise ValueError(f"{name} contains a self-pair: {pair!r}")
        if a > b:
            raise ValueError(f"{name} contains a non-canonical pair: {pair!r}")
        out.add((a, b))
    return out


def pairwise_metrics(
    predicted: Iterable[tuple[str, str]], gt: Iterable[tuple[str, str]]
) -> PairwiseResult:
    pred = _checked_pairs(predicted, "predicted")
    truth = _checked_pairs(gt, "gt")
    tp = len(pred & truth)
    fp = len(pred - truth)
    fn = len(truth - pred)
    return PairwiseResult(
        tp=tp,
        fp=fp,
        fn=fn,
        precision=_ratio(tp, tp + fp),
        recall=_ratio(tp, tp + fn),
    )


def _checked_chains(chains: Iterable[Collection[str]], name: str) -> list[frozenset[str]]:
    out = []
    seen: set[str] = set()
    for chain in chains:
        members = frozenset(chain)
        if not members:
            raise ValueError(f"{name} contains an empty chain")
        if members & seen:
            raise ValueError(
                f"{name} chains overlap on {sorted(members & seen)}"
            )
        seen |= members
        out.append(members)
    return out


def expand_chains_to_pairs(chains: Iterable[Collection[str]]) -> set[tuple[str, str]]:
    """All unordered within-chain pairs (the transitive closure of a
    chain's links)."""
    pairs = set()
    for members in _checked_chains(chains, "chains"):
        pairs.update(combinations(sorted(members), 2))
    return pairs


def chain_metrics(
    predicted: Iterable[Collection[str]], gt: Iterable[Collection[str]]
) -> ChainResult:
    """Greedy one-to-one chain assignment.

    Predicted chains are visited by descending size then ascending id
    (lowest member). A chain scores a true positive when some remaining
    ground-truth chain intersects it in >= 2 detections and >= half that
    ground-truth chain's size (real-valued); the qualifying chain with the
    largest intersection wins, ties to the lowest ground-truth id, and is
    removed from further consideration. Singleton predicted chains cannot
    satisfy the two-detection floor and must be filtered out beforehand.
    """
    pred = _checked_chains(predicted, "predicted")
    for members in pred:
        if len(members) < 2:
            raise ValueError(
                f"singleton predicted chain {sorted(members)} is not evaluable"
            )
    truth = _checked_chains(gt, "gt")

    pred.sort(key=lambda members: (-len(members), min(members)))
    remaining = {min(members): members for members in truth}

    tp = 0
    fp = 0
    for members in pred:
        best_key = None
        best_overlap = 0
        for gt_id, gt_members in remaining.items():
            overlap = len(members & gt_members)
            if overlap < 2 or overlap < len(gt_members) / 2:
                continue
            if overlap > best_overlap or (
                overlap == best_overlap and best_key is not None and gt_id < best_key
            ):
                best_key = gt_id
                best_overlap = overlap
        if best_key is None:
            fp += 1
        else:
            tp += 1
            del remaining[best_key]

    total_gt = len(truth)
    matched = total_gt - len(remaining)
    return ChainResult(
        tp=tp,
        fp=fp,
        matched_gt=matched,
        total_gt=total_gt,
        precision=_ratio(tp, tp + fp),
        recall=_ratio(matched, total_gt),
    )
