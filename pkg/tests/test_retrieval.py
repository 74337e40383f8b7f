"""Vocabulary, quantization, similarity blending, and top-k ranking."""

import numpy as np
import pytest

from defectmatch.errors import ConfigError, DataError
from defectmatch.model import Detection, Keypoint
from defectmatch.retrieval import (
    BowVector,
    RetrievalConfig,
    Vocabulary,
    bow_similarity,
    build_index,
    build_vocabulary,
    cnn_similarity,
    combined_similarity,
    filter_utility_keypoints,
    quantize,
    retrieve,
)
from oracles import nearest_centroid_oracle, point_in_polygon_oracle


def random_descriptors(rng, n):
    return rng.integers(0, 256, size=(n, 32), dtype=np.uint8)


def kp_at(x, y):
    return Keypoint(float(x), float(y), 0, 0.0, 1.0)


def utility_det(region, det_id="u1"):
    return Detection(det_id, "img1", "utility", "ruler", tuple(region), 1.0)


class TestFilterUtilityKeypoints:
    def test_no_utilities_identity(self):
        rng = np.random.default_rng(1)
        kps = [kp_at(5, 5), kp_at(9, 9)]
        descs = random_descriptors(rng, 2)
        defect = Detection("d1", "img1", "defect", "crack", ((0, 0), (20, 0), (20, 20)), 1.0)
        out_kps, out_descs, kept = filter_utility_keypoints(kps, descs, [defect])
        assert out_kps == kps
        assert out_descs is descs
        assert kept.tolist() == [0, 1]

    def test_total_coverage_empties(self):
        rng = np.random.default_rng(2)
        kps = [kp_at(5, 5), kp_at(40, 40)]
        descs = random_descriptors(rng, 2)
        ruler = utility_det([(0, 0), (100, 0), (100, 100), (0, 100)])
        out_kps, out_descs, kept = filter_utility_keypoints(kps, descs, [ruler])
        assert out_kps == []
        assert out_descs.shape == (0, 32)
        assert kept.size == 0

    def test_survivors_match_polygon_oracle(self):
        rng = np.random.default_rng(3)
        kps = [kp_at(x, y) for x, y in rng.uniform(0, 60, size=(100, 2))]
        descs = random_descriptors(rng, 100)
        region = [(10, 10), (45, 12), (40, 45), (8, 40)]
        ruler = utility_det(region)
        out_kps, out_descs, kept = filter_utility_keypoints(kps, descs, [ruler])
        outside = [
            i
            for i, kp in enumerate(kps)
            if not point_in_polygon_oracle(kp.x, kp.y, region)
        ]
        assert kept.tolist() == outside
        assert len(out_kps) == len(outside)
        assert np.array_equal(out_descs, descs[outside])

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        kps = [kp_at(x, y) for x, y in rng.uniform(0, 60, size=(50, 2))]
        descs = random_descriptors(rng, 50)
        ruler = utility_det([(0, 0), (30, 0), (30, 30), (0, 30)])
        kps1, descs1, _ = filter_utility_keypoints(kps, descs, [ruler])
        kps2, descs2, kept2 = filter_utility_keypoints(kps1, descs1, [ruler])
        assert kps2 == kps1
        assert np.array_equal(descs2, descs1)
        assert kept2.tolist() == list(range(len(kps1)))


class TestBuildVocabulary:
    def test_exactly_k_distinct_returns_sample(self):
        rng = np.random.default_rng(5)
        descs = np.unique(random_descriptors(rng, 40), axis=0)[:16]
        vocab = build_vocabulary([descs], k=16, seed=9)
        assert vocab.k == 16
        assert {row.tobytes() for row in vocab.centroids} == {
            row.tobytes() for row in descs
        }

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        per_image = [random_descriptors(rng, 80) for _ in range(4)]
        v1 = build_vocabulary(per_image, k=24, seed=11)
        v2 = build_vocabulary(per_image, k=24, seed=11)
        assert np.array_equal(v1.centroids, v2.centroids)
        assert np.array_equal(v1.idf, v2.idf)
        assert v1.token == v2.token

    def test_seed_changes_result(self):
        rng = np.random.default_rng(7)
        per_image = [random_descriptors(rng, 200)]
        v1 = build_vocabulary(per_image, k=8, seed=1)
        v2 = build_vocabulary(per_image, k=8, seed=2)
        assert v1.token != v2.token

    def test_two_separated_clusters(self):
        rng = np.random.default_rng(8)
        base_a = random_descriptors(rng, 1)[0]
        base_b = np.bitwise_not(base_a)

        def jitter(base, n):
            out = np.tile(base, (n, 1))
            bits = np.unpackbits(out, axis=1)
            for i in range(n):
                flips = rng.choice(256, size=int(rng.integers(0, 5)), replace=False)
                bits[i, flips] ^= 1
            return np.packbits(bits, axis=1)

        cluster_a = jitter(base_a, 30)
        cluster_b = jitter(base_b, 30)
        sample = np.concatenate([cluster_a, cluster_b])
        vocab = build_vocabulary([sample], k=2, seed=13)

        def majority(cluster):
            bits = np.unpackbits(cluster, axis=1)
            return np.packbits((bits.sum(axis=0) * 2 > cluster.shape[0]).astype(np.uint8))

        from defectmatch.features import hamming

        maj = [majority(cluster_a), majority(cluster_b)]
        for m in maj:
            assert min(hamming(m, c) for c in vocab.centroids) <= 8

    def test_sample_too_small(self):
        rng = np.random.default_rng(9)
        with pytest.raises(DataError):
            build_vocabulary([random_descriptors(rng, 5)], k=16, seed=1)

    def test_not_enough_distinct(self):
        row = np.arange(32, dtype=np.uint8)
        descs = np.tile(row, (50, 1))
        with pytest.raises(DataError):
            build_vocabulary([descs], k=4, seed=1)

    def test_idf_formula_and_clamp(self):
        rng = np.random.default_rng(10)
        per_image = [random_descriptors(rng, 60) for _ in range(5)]
        vocab = build_vocabulary(per_image, k=16, seed=3)
        containing = np.zeros(16, dtype=np.int64)
        for descs in per_image:
            words = np.unique(nearest_centroid_oracle(descs, vocab.centroids))
            containing[words] += 1
        expected = np.maximum(0.0, np.log(5 / (1.0 + containing)))
        assert np.allclose(vocab.idf, expected, atol=0)
        assert (vocab.idf >= 0).all()

    def test_centroids_distinct(self):
        rng = np.random.default_rng(12)
        per_image = [random_descriptors(rng, 300) for _ in range(3)]
        vocab = build_vocabulary(per_image, k=64, seed=21)
        assert len({row.tobytes() for row in vocab.centroids}) == 64

    def test_train_cap_applies(self):
        rng = np.random.default_rng(14)
        per_image = [random_descriptors(rng, 400)]
        vocab = build_vocabulary(per_image, k=8, seed=5, train_cap=64)
        assert vocab.k == 8


def make_vocab(rng, k=8, idf=None):
    centroids = np.unique(random_descriptors(rng, k * 4), axis=0)[:k]
    assert centroids.shape[0] == k
    idf_arr = np.ones(k) if idf is None else np.asarray(idf, dtype=np.float64)
    from defectmatch.retrieval import _vocab_token

    return Vocabulary(
        k=k, centroids=centroids, idf=idf_arr, train_seed=0,
        token=_vocab_token(centroids, idf_arr, 0),
    )


class TestQuantize:
    def test_single_descriptor_on_centroid(self):
        rng = np.random.default_rng(15)
        vocab = make_vocab(rng)
        bow = quantize(vocab.centroids[3:4], vocab)
        assert not bow.is_zero
        assert bow.weights == {3: 1.0}

    def test_zero_descriptors_flagged(self):
        rng = np.random.default_rng(16)
        vocab = make_vocab(rng)
        bow = quantize(np.zeros((0, 32), dtype=np.uint8), vocab)
        assert bow.is_zero
        assert bow.weights == {}

    def test_all_idf_zero_flagged(self):
        rng = np.random.default_rng(17)
        vocab = make_vocab(rng, idf=np.zeros(8))
        bow = quantize(random_descriptors(rng, 10), vocab)
        assert bow.is_zero

    def test_histogram_matches_oracle(self):
        rng = np.random.default_rng(18)
        vocab = make_vocab(rng, k=16)
        descs = random_descriptors(rng, 300)
        bow = quantize(descs, vocab)
        assign = nearest_centroid_oracle(descs, vocab.centroids)
        tf = np.bincount(assign, minlength=16).astype(np.float64)
        raw = tf * vocab.idf
        expected = raw / np.linalg.norm(raw)
        for w, val in bow.weights.items():
            assert val == pytest.approx(expected[w], rel=1e-12)
        assert set(bow.weights) == set(np.nonzero(raw)[0])

    def test_tie_goes_to_lowest_word(self):
        zeros = np.zeros((1, 32), dtype=np.uint8)
        ones = np.full((1, 32), 255, dtype=np.uint8)
        centroids = np.concatenate([zeros, ones])
        idf = np.ones(2)
        from defectmatch.retrieval import _vocab_token

        vocab = Vocabulary(
            k=2, centroids=centroids, idf=idf, train_seed=0,
            token=_vocab_token(centroids, idf, 0),
        )
        half = np.concatenate([np.full(16, 255, np.uint8), np.zeros(16, np.uint8)])
        bow = quantize(half[None, :], vocab)
        assert bow.weights == {0: 1.0}

    def test_norm_is_one(self):
        rng = np.random.default_rng(19)
        vocab = make_vocab(rng, k=16)
        bow = quantize(random_descriptors(rng, 120), vocab)
        norm = np.sqrt(sum(v * v for v in bow.weights.values()))
        assert norm == pytest.approx(1.0, rel=1e-12)


class TestBowSimilarity:
    def test_self_similarity_exact_one(self):
        rng = np.random.default_rng(20)
        vocab = make_vocab(rng, k=16)
        bow = quantize(random_descriptors(rng, 50), vocab)
        assert bow_similarity(bow, bow) == 1.0

    def test_disjoint_support_zero(self):
        a = BowVector({0: 1.0}, False, "t")
        b = BowVector({1: 1.0}, False, "t")
        assert bow_similarity(a, b) == 0.0

    def test_zero_vector_scores_zero(self):
        a = BowVector({}, True, "t")
        b = BowVector({1: 1.0}, False, "t")
        assert bow_similarity(a, b) == 0.0

    def test_matches_dense_dot(self):
        rng = np.random.default_rng(21)
        vocab = make_vocab(rng, k=32)
        for _ in range(20):
            bow_a = quantize(random_descriptors(rng, 60), vocab)
            bow_b = quantize(random_descriptors(rng, 60), vocab)
            dense_a = np.zeros(32)
            dense_b = np.zeros(32)
            for w, v in bow_a.weights.items():
                dense_a[w] = v
            for w, v in bow_b.weights.items():
                dense_b[w] = v
            assert bow_similarity(bow_a, bow_b) == pytest.approx(
                float(dense_a @ dense_b), abs=1e-9
            )

    def test_vocab_mismatch_rejected(self):
        a = BowVector({0: 1.0}, False, "t1")
        b = BowVector({0: 1.0}, False, "t2")
        with pytest.raises(ValueError):
            bow_similarity(a, b)


class TestCnnSimilarity:
    def test_identical_is_one(self):
        e = np.array([0.6, 0.8])
        assert cnn_similarity(e, e.copy()) == 1.0

    def test_antipodal_is_zero(self):
        e = np.array([0.6, 0.8])
        assert cnn_similarity(e, -e) == 0.0

    def test_orthogonal_is_half(self):
        assert cnn_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.5

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cnn_similarity(np.ones(3) / np.sqrt(3), np.ones(4) / 2.0)


class TestCombinedSimilarity:
    def test_blend_arithmetic(self):
        assert combined_similarity(0.8, 0.6, 0.5) == pytest.approx(0.70, abs=1e-12)
        assert combined_similarity(0.25, 0.75, 0.2) == pytest.approx(0.65, abs=1e-12)

    def test_endpoints_exact(self):
        rng = np.random.default_rng(22)
        for _ in range(100):
            s1, s2 = rng.uniform(0, 1, size=2)
            assert combined_similarity(s1, s2, 1.0) == s1
            assert combined_similarity(s1, s2, 0.0) == s2

    def test_range_on_random_triples(self):
        rng = np.random.default_rng(23)
        for _ in range(10000):
            s1, s2, alpha = rng.uniform(0, 1, size=3)
            v = combined_similarity(s1, s2, alpha)
            assert 0.0 <= v <= 1.0

    def test_monotone_in_each_argument(self):
        rng = np.random.default_rng(24)
        for _ in range(200):
            s1, s2, alpha = rng.uniform(0, 1, size=3)
            bump = rng.uniform(0, 1.0 - s1)
            assert combined_similarity(s1 + bump, s2, alpha) >= combined_similarity(
                s1, s2, alpha
            )
            bump2 = rng.uniform(0, 1.0 - s2)
            assert combined_similarity(s1, s2 + bump2, alpha) >= combined_similarity(
                s1, s2, alpha
            )

    def test_alpha_out_of_range(self):
        with pytest.raises(ConfigError):
            combined_similarity(0.5, 0.5, 1.5)

    def test_bad_similarity_rejected(self):
        with pytest.raises(ValueError):
            combined_similarity(1.2, 0.5, 0.5)


class TestRetrieve:
    def make_index(self, rng, n=6, with_embeddings=True):
        vocab = make_vocab(rng, k=32)
        bows = {}
        embeddings = {} if with_embeddings else None
        for i in range(n):
            img = f"img{i:02d}"
            bows[img] = quantize(random_descriptors(rng, 80), vocab)
            if with_embeddings:
                v = rng.normal(size=16)
                embeddings[img] = v / np.linalg.norm(v)
        return build_index(bows, embeddings), vocab

    def test_duplicate_ranked_first_with_one(self):
        rng = np.random.default_rng(25)
        vocab = make_vocab(rng, k=32)
        descs = random_descriptors(rng, 90)
        emb = rng.normal(size=16)
        emb /= np.linalg.norm(emb)
        bows = {
            "query": quantize(descs, vocab),
            "twin": quantize(descs.copy(), vocab),
            "other": quantize(random_descriptors(rng, 90), vocab),
        }
        embeddings = {"query": emb, "twin": emb.copy(), "other": -emb}
        index = build_index(bows, embeddings)
        ranked = retrieve("query", index, RetrievalConfig())
        assert ranked[0] == ("twin", 1.0)

    def test_top_k_zero_empty(self):
        rng = np.random.default_rng(26)
        index, _ = self.make_index(rng)
        assert retrieve("img00", index, RetrievalConfig(top_k=0)) == []

    def test_top_k_truncates(self):
        rng = np.random.default_rng(27)
        index, _ = self.make_index(rng, n=8)
        assert len(retrieve("img00", index, RetrievalConfig(top_k=3))) == 3

    def test_permutation_invariant(self):
        rng = np.random.default_rng(28)
        index, _ = self.make_index(rng, n=7)
        shuffled_bows = dict(reversed(list(index.bows.items())))
        shuffled_emb = dict(reversed(list(index.embeddings.items())))
        index2 = build_index(shuffled_bows, shuffled_emb)
        cfg = RetrievalConfig(top_k=5)
        assert retrieve("img03", index, cfg) == retrieve("img03", index2, cfg)

    def test_unknown_query(self):
        rng = np.random.default_rng(29)
        index, _ = self.make_index(rng)
        with pytest.raises(ValueError):
            retrieve("nope", index, RetrievalConfig())

    def test_no_embeddings_forces_pure_bow(self):
        rng = np.random.default_rng(30)
        index, _ = self.make_index(rng, with_embeddings=False)
        cfg = RetrievalConfig(alpha=0.5)
        ranked = retrieve("img00", index, cfg)
        for other, score in ranked:
            assert score == bow_similarity(index.bows["img00"], index.bows[other])

    def test_min_score_filters(self):
        bows = {
            "a": BowVector({0: 1.0}, False, "t"),
            "b": BowVector({0: 1.0}, False, "t"),
            "c": BowVector({1: 1.0}, False, "t"),
        }
        index = build_index(bows)
        ranked = retrieve("a", index, RetrievalConfig(min_score=0.5))
        assert ranked == [("b", 1.0)]

    def test_mixed_vocab_rejected(self):
        bows = {
            "a": BowVector({0: 1.0}, False, "t1"),
            "b": BowVector({0: 1.0}, False, "t2"),
        }
        with pytest.raises(DataError):
            build_index(bows)
