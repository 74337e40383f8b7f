"""Hybrid image retrieval: TF-IDF bag of binary words blended with
ingested embedding vectors.

The BoW side quantizes each image's 256-bit descriptors against a
k-majority vocabulary trained in Hamming space. The embedding side is a
cosine score mapped onto [0, 1]. The two are fused by a convex blend
with weight alpha; alpha 1 is pure BoW, alpha 0 pure embeddings.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import ConfigError, DataError
from .features import hamming_matrix
from .model import Detection, Keypoint


@dataclass(frozen=True)
class RetrievalConfig:
    alpha: float = 0.5
    top_k: int = 20
    min_score: float = 0.0
    vocab_k: int = 1024
    # training-sample cap keeps clustering tractable on large surveys;
    # idf still uses every descriptor of every image
    vocab_train_cap: int = 20000

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.top_k < 0:
            raise ConfigError(f"top_k must be >= 0, got {self.top_k}")
        if not 0.0 <= self.min_score <= 1.0:
            raise ConfigError(f"min_score must lie in [0, 1], got {self.min_score}")
        if self.vocab_k < 1:
            raise ConfigError(f"vocab_k must be >= 1, got {self.vocab_k}")
        if self.vocab_train_cap < 1:
            raise ConfigError(f"vocab_train_cap must be >= 1, got {self.vocab_train_cap}")


@dataclass(frozen=True, eq=False)
class Vocabulary:
    k: int
    centroids: np.ndarray  # (k, 32) uint8, all rows distinct
    idf: np.ndarray  # (k,) float64, >= 0
    train_seed: int
    token: str  # content hash; quantized vectors only compare within one vocabulary


@dataclass(frozen=True)
class BowVector:
    """Sparse L2-normalized TF-IDF vector. is_zero marks images that end
    up with no mass (no descriptors, or every observed word has idf 0).
    """

    weights: dict[int, float]
    is_zero: bool
    vocab_token: str


def filter_utility_keypoints(
    keypoints: list[Keypoint],
    descriptors: np.ndarray,
    detections: list[Detection],
) -> tuple[list[Keypoint], np.ndarray, np.ndarray]:
    """Drop keypoints inside any utility-category region (rulers, tags).

    Returns (keypoints, descriptors, kept_original_indices). Identity
    when there is nothing to filter; idempotent.
    """
    utilities = [d for d in detections if d.category == "utility"]
    n = len(keypoints)
    if not utilities or n == 0:
        return keypoints, descriptors, np.arange(n, dtype=np.int64)
    pos = np.array([(kp.x, kp.y) for kp in keypoints], dtype=np.float64)
    inside = np.zeros(n, dtype=bool)
    for det in utilities:
        inside |= geometry.points_in_polygon(pos, det.region_array())
    kept = np.nonzero(~inside)[0]
    return [keypoints[i] for i in kept], descriptors[kept], kept


def _vocab_token(centroids: np.ndarray, idf: np.ndarray, seed: int) -> str:
    h = hashlib.sha256()
    h.update(centroids.tobytes())
    h.update(idf.tobytes())
    h.update(str(seed).encode())
    return h.hexdigest()[:16]


def _repair_centroids(
    centroids: np.ndarray, train: np.ndarray, dist_to_assigned: np.ndarray
) -> np.ndarray:
    """Replace duplicate centroid rows with the training descriptors
    farthest from their assigned centroid. Deterministic.
    """
    seen: set[bytes] = set()
    needs: list[int] = []
    for i in range(centroids.shape[0]):
        key = centroids[i].tobytes()
        if key in seen:
            needs.append(i)
        else:
            seen.add(key)
    if not needs:
        return centroids
    order = np.argsort(-dist_to_assigned, kind="stable")
    out = centroids.copy()
    cursor = 0
    for slot in needs:
        while cursor < order.size:
            cand = train[order[cursor]]
            cursor += 1
            key = cand.tobytes()
            if key not in seen:
                out[slot] = cand
                seen.add(key)
                break
    return out


def build_vocabulary(
    per_image_descriptors,
    k: int,
    seed: int,
    train_cap: int | None = None,
    max_iters: int = 15,
) -> Vocabulary:
    """Cluster descriptors into k binary words and compute per-word idf.

    Assignment is nearest-centroid in Hamming distance (ties to the
    lowest word index); the update step takes a per-bit majority vote,
    breaking exact ties with a seed-derived bit pattern. idf of word w is
    ln(n_images / (1 + images_containing_w)), clamped at zero.
    """
    arrays = [np.asarray(a, dtype=np.uint8).reshape(-1, 32) for a in per_image_descriptors]
    n_images = len(arrays)
    sample = (
        np.concatenate(arrays, axis=0) if arrays else np.zeros((0, 32), dtype=np.uint8)
    )
    if sample.shape[0] < k:
        raise DataError(
            f"vocabulary needs at least k={k} descriptors, got {sample.shape[0]}"
        )
    rng = np.random.default_rng(seed)
    train = sample
    if train_cap is not None and train.shape[0] > train_cap:
        sel = np.sort(rng.choice(train.shape[0], size=train_cap, replace=False))
        train = train[sel]
    unique = np.unique(train, axis=0)
    if unique.shape[0] < k:
        raise DataError(
            f"vocabulary needs k={k} distinct descriptors, found {unique.shape[0]}"
        )
    if unique.shape[0] == k:
        centroids = unique.copy()
    else:
        idx = np.sort(rng.choice(unique.shape[0], size=k, replace=False))
        centroids = unique[idx]
    tie_bits = rng.integers(0, 2, size=(k, 256), dtype=np.uint8)

    train_bits = np.unpackbits(train, axis=1)
    prev_assign = None
    for _ in range(max_iters):
        dists = hamming_matrix(train, centroids)
        assign = dists.argmin(axis=1)
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        prev_assign = assign
        member_counts = np.bincount(assign, minlength=k)
        ones = np.empty((k, 256), dtype=np.int64)
        for j in range(256):
            ones[:, j] = np.bincount(assign, weights=train_bits[:, j], minlength=k)
        counts_col = member_counts[:, None]
        new_bits = np.where(
            2 * ones > counts_col, 1, np.where(2 * ones < counts_col, 0, tie_bits)
        ).astype(np.uint8)
        new_centroids = np.packbits(new_bits, axis=1)
        # empty clusters and collapsed duplicates are reseeded from the
        # descriptors worst served by the current assignment
        dist_to_assigned = dists[np.arange(train.shape[0]), assign].astype(np.float64)
        empty = member_counts == 0
        if empty.any():
            order = np.argsort(-dist_to_assigned, kind="stable")
            taken = {new_centroids[i].tobytes() for i in range(k) if not empty[i]}
            cursor = 0
            for slot in np.nonzero(empty)[0]:
                while cursor < order.size:
                    cand = train[order[cursor]]
                    cursor += 1
                    if cand.tobytes() not in taken:
                        new_centroids[slot] = cand
                        taken.add(cand.tobytes())
                        break
        centroids = _repair_centroids(new_centroids, train, dist_to_assigned)

    # document frequency over the full per-image descriptor sets
    containing = np.zeros(k, dtype=np.int64)
    for arr in arrays:
        if arr.shape[0] == 0:
            continue
        words = np.unique(hamming_matrix(arr, centroids).argmin(axis=1))
        containing[words] += 1
    with np.errstate(divide="ignore"):
        idf = np.log(n_images / (1.0 + containing.astype(np.float64)))
    idf = np.maximum(idf, 0.0)

    centroids.setflags(write=False)
    idf.setflags(write=False)
    return Vocabulary(
        k=k,
        centroids=centroids,
        idf=idf,
        train_seed=seed,
        token=_vocab_token(centroids, idf, seed),
    )


def quantize(descriptors: np.ndarray, vocab: Vocabulary) -> BowVector:
    """TF-IDF vector of one image's descriptors, L2-normalized.

    Nearest-centroid ties go to the lowest word index. Zero descriptors,
    or tf mass landing only on idf-0 words, yield a flagged zero vector.
    """
    descriptors = np.asarray(descriptors, dtype=np.uint8).reshape(-1, 32)
    if descriptors.shape[0] == 0:
        return BowVector(weights={}, is_zero=True, vocab_token=vocab.token)
    assign = hamming_matrix(descriptors, vocab.centroids).argmin(axis=1)
    tf = np.bincount(assign, minlength=vocab.k).astype(np.float64)
    raw = tf * vocab.idf
    norm = float(np.sqrt(np.sum(raw * raw)))
    if norm == 0.0:
        return BowVector(weights={}, is_zero=True, vocab_token=vocab.token)
    nz = np.nonzero(raw)[0]
    weights = {int(w): float(raw[w] / norm) for w in nz}
    return BowVector(weights=weights, is_zero=False, vocab_token=vocab.token)


def bow_similarity(a: BowVector, b: BowVector) -> float:
    """Cosine of two TF-IDF vectors; in [0, 1] since weights are >= 0."""
    if a.vocab_token != b.vocab_token:
        raise ValueError("BoW vectors come from different vocabularies")
    if a.is_zero or b.is_zero:
        return 0.0
    if a.weights == b.weights:
        return 1.0
    small, large = (a.weights, b.weights) if len(a.weights) <= len(b.weights) else (b.weights, a.weights)
    dot = sum(w * large[word] for word, w in small.items() if word in large)
    return min(1.0, max(0.0, dot))


def cnn_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of two unit embedding vectors mapped onto [0, 1]."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"embedding dimensions differ: {a.shape[0]} vs {b.shape[0]}")
    if np.array_equal(a, b):
        return 1.0
    if np.array_equal(a, -b):
        return 0.0
    cos = float(np.clip(np.dot(a, b), -1.0, 1.0))
    return (cos + 1.0) / 2.0


def combined_similarity(s_sift: float, s_cnn: float, alpha: float) -> float:
    """Convex blend alpha * s_sift + (1 - alpha) * s_cnn, exact at the
    endpoints and clamped into [0, 1] against rounding.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    if not (0.0 <= s_sift <= 1.0 and 0.0 <= s_cnn <= 1.0):
        raise ValueError(f"similarities must lie in [0, 1], got {s_sift}, {s_cnn}")
    if alpha == 1.0:
        return float(s_sift)
    if alpha == 0.0:
        return float(s_cnn)
    if s_sift == s_cnn:
        return float(s_sift)
    value = alpha * s_sift + (1.0 - alpha) * s_cnn
    return min(1.0, max(0.0, value))


@dataclass(frozen=True, eq=False)
class RetrievalIndex:
    image_ids: tuple[str, ...]  # sorted
    bows: dict[str, BowVector]
    embeddings: dict[str, np.ndarray] | None = field(default=None)


def build_index(
    bows: dict[str, BowVector], embeddings: dict[str, np.ndarray] | None = None
) -> RetrievalIndex:
    ids = tuple(sorted(bows))
    tokens = {bow.vocab_token for bow in bows.values()}
    if len(tokens) > 1:
        raise DataError("indexed BoW vectors span multiple vocabularies")
    if embeddings is not None:
        missing = [i for i in ids if i not in embeddings]
        if missing:
            raise DataError(f"embeddings missing for images: {missing[:5]}")
        dims = {embeddings[i].shape[-1] for i in ids}
        if len(dims) > 1:
            raise DataError(f"embedding dimensions inconsistent: {sorted(dims)}")
    return RetrievalIndex(image_ids=ids, bows=bows, embeddings=embeddings)


def retrieve(
    query_id: str, index: RetrievalIndex, cfg: RetrievalConfig
) -> list[tuple[str, float]]:
    """Rank all other indexed images by hybrid similarity to the query.

    With no embeddings in the index the blend weight is forced to 1
    (pure BoW). Scores below min_score drop; ties order by image id.
    """
    if query_id not in index.bows:
        raise ValueError(f"query image {query_id!r} is not indexed")
    alpha = cfg.alpha if index.embeddings is not None else 1.0
    q_bow = index.bows[query_id]
    q_emb = index.embeddings[query_id] if index.embeddings is not None else None
    scored = []
    for other in index.image_ids:
        if other == query_id:
            continue
        s_sift = bow_similarity(q_bow, index.bows[other])
        s_cnn = (
            cnn_similarity(q_emb, index.embeddings[other]) if q_emb is not None else 0.0
        )
        score = combined_similarity(s_sift, s_cnn, alpha)
        if score >= cfg.min_score:
            scored.append((other, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[: cfg.top_k]
