"""End-to-end orchestration: features -> vocabulary -> retrieval ->
matching -> valid-match counting -> chains -> metrics -> report.

Stage outputs are pure functions of (dataset bytes, config, seed), so a
work directory can persist them between invocations; every persisted
payload carries a key derived from the dataset fingerprint and config
and is silently recomputed when stale. Worker count changes scheduling
only, never results, and is deliberately left out of the config echo.
"""

from __future__ import annotations

import base64
import dataclasses
import hashlib
import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .chains import (
    DefectChain,
    DefectMatchGraph,
    DefectPairCount,
    MatchThresholdConfig,
    accumulate_counts,
    build_chains,
    build_graph,
    count_valid_matches,
)
from .dataset import Dataset
from .errors import ConfigError, DataError, DefectMatchError, PipelineError
from .evaluation import (
    ChainResult,
    PairwiseResult,
    chain_metrics,
    pairwise_metrics,
)
from .features import FeatureConfig, extract_features
from .matching import MatchConfig, PairMatches, geometric_verify, match_descriptors
from .model import Keypoint, canonical_pair
from .retrieval import (
    BowVector,
    RetrievalConfig,
    Vocabulary,
    build_index,
    build_vocabulary,
    filter_utility_keypoints,
    quantize,
    retrieve,
)

REPORT_SCHEMA = "defectmatch/report@1"


@dataclass(frozen=True)
class PipelineConfig:
    features: FeatureConfig = field(default_factory=FeatureConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    matching: MatchConfig = field(default_factory=MatchConfig)
    threshold: MatchThresholdConfig = field(default_factory=MatchThresholdConfig)
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    def echo(self) -> dict:
        """Everything that determines results; workers only changes
        scheduling, so it stays out and reports stay byte-comparable
        across machines."""
        return {
            "features": dataclasses.asdict(self.features),
            "retrieval": dataclasses.asdict(self.retrieval),
            "matching": dataclasses.asdict(self.matching),
            "threshold": dataclasses.asdict(self.threshold),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class EvalReport:
    pairwise: PairwiseResult
    chain: ChainResult


@dataclass(frozen=True)
class ChainRecord:
    chain_id: str
    members: tuple[tuple[str, str, str], ...]  # (image_id, detection_id, class_label)
    edges: tuple[tuple[str, str, int], ...]  # (detection_a, detection_b, valid_count)


@dataclass(frozen=True)
class ChainReport:
    dataset_id: str
    config: dict
    retrieval_pairs: tuple[tuple[str, str], ...]
    chains: tuple[ChainRecord, ...]
    singletons: tuple[tuple[str, str, str], ...]
    evaluation: EvalReport | None


def _sha_json(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def _sha_pixels(arr: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(str(arr.shape).encode())
    h.update(str(arr.dtype).encode())
    h.update(arr.tobytes())
    return h.hexdigest()


def _atomic_write(path: str, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@contextmanager
def _stage(name: str):
    """Tag unexpected failures with the stage that raised them; the
    error taxonomy (config vs data) passes through untouched."""
    try:
        yield
    except DefectMatchError:
        raise
    except Exception as exc:
        raise PipelineError(name, str(exc)) from exc


def _parallel_map(fn, items, workers: int) -> list:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


class _StageStore:
    """JSON persistence for intermediate stage payloads. Each payload is
    keyed by the dataset fingerprint plus only the config its stage
    depends on, so changing tau reuses cached matching, changing the
    matcher reuses cached retrieval, and so on; a stale key silently
    recomputes instead of corrupting."""

    def __init__(self, work_dir: str | None, fingerprint: str):
        self.work_dir = work_dir
        self.fingerprint = fingerprint
        if work_dir is not None:
            os.makedirs(work_dir, exist_ok=True)

    def _key(self, name: str, deps: dict) -> str:
        return _sha_json({"data": self.fingerprint, "stage": name, "deps": deps})

    def load(self, name: str, deps: dict):
        if self.work_dir is None:
            return None
        path = os.path.join(self.work_dir, f"{name}.json")
        if not os.path.exists(path):
            return None
        try:
            with open(path, "r", encoding="utf-8") as fh:
                wrapped = json.load(fh)
        except (OSError, json.JSONDecodeError):
            return None
        if wrapped.get("stage_key") != self._key(name, deps):
            return None
        return wrapped["payload"]

    def save(self, name: str, deps: dict, payload) -> None:
        if self.work_dir is None:
            return
        wrapped = {"stage_key": self._key(name, deps), "payload": payload}
        data = json.dumps(wrapped, sort_keys=True).encode()
        _atomic_write(os.path.join(self.work_dir, f"{name}.json"), data)


def _load_pixels(dataset: Dataset) -> dict[str, np.ndarray]:
    out = {}
    for record in dataset.records:
        try:
            with Image.open(record.source_path) as img:
                arr = np.asarray(img)
        except OSError as exc:
            raise DataError(f"cannot read image {record.source_path}: {exc}") from exc
        if arr.shape[:2] != (record.height, record.width):
            raise DataError(
                f"image {record.image_id!r}: file is {arr.shape[1]}x{arr.shape[0]}, "
                f"manifest says {record.width}x{record.height}"
            )
        out[record.image_id] = arr
    return out


def _feature_cache_path(work_dir: str, pixel_sha: str, cfg_sha: str) -> str:
    return os.path.join(work_dir, "features", f"{pixel_sha[:24]}-{cfg_sha[:16]}.npz")


def _save_features(path: str, kps: list[Keypoint], descs: np.ndarray) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    buf = {
        "x": np.array([k.x for k in kps], dtype=np.float64),
        "y": np.array([k.y for k in kps], dtype=np.float64),
        "octave": np.array([k.octave for k in kps], dtype=np.int64),
        "orientation": np.array([k.orientation for k in kps], dtype=np.float64),
        "response": np.array([k.response for k in kps], dtype=np.float64),
        "descriptors": np.asarray(descs, dtype=np.uint8).reshape(-1, 32),
    }
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), suffix=".tmp")
    os.close(fd)
    try:
        with open(tmp, "wb") as fh:
            np.savez(fh, **buf)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_features(path: str) -> tuple[list[Keypoint], np.ndarray] | None:
    try:
        with np.load(path) as data:
            kps = [
                Keypoint(x=x, y=y, octave=int(o), orientation=t, response=r)
                for x, y, o, t, r in zip(
                    data["x"], data["y"], data["octave"],
                    data["orientation"], data["response"],
                )
            ]
            return kps, data["descriptors"].copy()
    except (OSError, KeyError, ValueError):
        return None


def _dataset_fingerprint(dataset: Dataset, pixel_shas: dict[str, str]) -> str:
    det_rows = [
        {
            "id": d.detection_id,
            "image": d.image_id,
            "category": d.category,
            "class": d.class_label,
            "region": [[x, y] for x, y in d.region],
            "confidence": d.confidence,
        }
        for d in sorted(dataset.detections, key=lambda d: d.detection_id)
    ]
    emb = None
    if dataset.embeddings is not None:
        emb = {
            image_id: hashlib.sha256(
                np.asarray(vec, dtype=np.float64).tobytes()
            ).hexdigest()
            for image_id, vec in sorted(dataset.embeddings.items())
        }
    return _sha_json(
        {
            "dataset_id": dataset.dataset_id,
            "images": dict(sorted(pixel_shas.items())),
            "detections": det_rows,
            "embeddings": emb,
        }
    )


class _Runner:
    """Executes pipeline stages in order, persisting resumable payloads
    when a work directory is given."""

    def __init__(self, dataset, cfg, pixels=None, work_dir=None):
        self.dataset = dataset
        self.cfg = cfg
        self.work_dir = work_dir
        with _stage("load_images"):
            self.pixels = _load_pixels(dataset) if pixels is None else dict(pixels)
            missing = [r.image_id for r in dataset.records if r.image_id not in self.pixels]
            if missing:
                raise DataError(f"pixels missing for images: {missing[:5]}")
        self.image_ids = sorted(r.image_id for r in dataset.records)
        self.dets_by_image = {i: [] for i in self.image_ids}
        for det in dataset.detections:
            if det.image_id not in self.dets_by_image:
                raise DataError(
                    f"detection {det.detection_id!r} references unknown "
                    f"image {det.image_id!r}"
                )
            self.dets_by_image[det.image_id].append(det)
        for dets in self.dets_by_image.values():
            dets.sort(key=lambda d: d.detection_id)
        self.pixel_shas = {i: _sha_pixels(self.pixels[i]) for i in self.image_ids}
        self.feature_cfg_sha = _sha_json(dataclasses.asdict(cfg.features))
        self.store = _StageStore(
            work_dir, _dataset_fingerprint(dataset, self.pixel_shas)
        )
        # per-stage cache keys: each lists exactly the config a stage reads
        feats = dataclasses.asdict(cfg.features)
        self.vocab_deps = {
            "features": feats,
            "vocab_k": cfg.retrieval.vocab_k,
            "train_cap": cfg.retrieval.vocab_train_cap,
            "seed": cfg.seed,
        }
        self.pairs_deps = {
            **self.vocab_deps,
            "alpha": cfg.retrieval.alpha,
            "top_k": cfg.retrieval.top_k,
            "min_score": cfg.retrieval.min_score,
        }
        self.counts_deps = {
            **self.pairs_deps,
            "matching": dataclasses.asdict(cfg.matching),
        }

    # ---- features ----------------------------------------------------

    def _features_one(self, image_id: str) -> tuple[list[Keypoint], np.ndarray]:
        path = None
        if self.work_dir is not None:
            path = _feature_cache_path(
                self.work_dir, self.pixel_shas[image_id], self.feature_cfg_sha
            )
            if os.path.exists(path):
                cached = _load_features(path)
                if cached is not None:
                    return cached
        kps, descs = extract_features(self.pixels[image_id], self.cfg.features)
        if path is not None:
            _save_features(path, kps, descs)
        return kps, descs

    def features(self) -> dict[str, tuple[list[Keypoint], np.ndarray]]:
        with _stage("extract_features"):
            results = _parallel_map(
                self._features_one, self.image_ids, self.cfg.workers
            )
        return dict(zip(self.image_ids, results))

    def filtered(self, features) -> dict[str, tuple[list[Keypoint], np.ndarray]]:
        with _stage("filter_utility_keypoints"):
            out = {}
            for image_id in self.image_ids:
                kps, descs = features[image_id]
                kept_kps, kept_descs, _ = filter_utility_keypoints(
                    kps, descs, self.dets_by_image[image_id]
                )
                out[image_id] = (kept_kps, kept_descs)
        return out

    # ---- vocabulary and retrieval -------------------------------------

    def vocabulary(self, filtered) -> Vocabulary | None:
        if sum(filtered[i][1].shape[0] for i in self.image_ids) == 0:
            return None
        payload = self.store.load("vocabulary", self.vocab_deps)
        if payload is not None:
            return Vocabulary(
                k=payload["k"],
                centroids=np.frombuffer(
                    base64.b64decode(payload["centroids"]), dtype=np.uint8
                ).reshape(-1, 32).copy(),
                idf=np.asarray(payload["idf"], dtype=np.float64),
                train_seed=payload["seed"],
                token=payload["token"],
            )
        with _stage("build_vocabulary"):
            vocab = build_vocabulary(
                [filtered[i][1] for i in self.image_ids],
                k=self.cfg.retrieval.vocab_k,
                seed=self.cfg.seed,
                train_cap=self.cfg.retrieval.vocab_train_cap,
            )
        self.store.save(
            "vocabulary",
            self.vocab_deps,
            {
                "k": vocab.k,
                "seed": vocab.train_seed,
                "token": vocab.token,
                "idf": vocab.idf.tolist(),
                "centroids": base64.b64encode(vocab.centroids.tobytes()).decode(),
            },
        )
        return vocab

    def bows(self, filtered, vocab) -> dict[str, BowVector]:
        if vocab is None:
            return {
                i: BowVector(weights={}, is_zero=True, vocab_token="empty")
                for i in self.image_ids
            }
        payload = self.store.load("bows", self.vocab_deps)
        if payload is not None and payload["vocab_token"] == vocab.token:
            return {
                image_id: BowVector(
                    weights={int(w): v for w, v in row["w"].items()},
                    is_zero=row["zero"],
                    vocab_token=vocab.token,
                )
                for image_id, row in payload["images"].items()
            }
        with _stage("quantize"):
            vecs = _parallel_map(
                lambda i: quantize(filtered[i][1], vocab),
                self.image_ids,
                self.cfg.workers,
            )
        out = dict(zip(self.image_ids, vecs))
        self.store.save(
            "bows",
            self.vocab_deps,
            {
                "vocab_token": vocab.token,
                "images": {
                    i: {
                        "w": {str(w): v for w, v in out[i].weights.items()},
                        "zero": out[i].is_zero,
                    }
                    for i in self.image_ids
                },
            },
        )
        return out

    def pairs(self, bows) -> list[tuple[str, str]]:
        payload = self.store.load("pairs", self.pairs_deps)
        if payload is not None:
            return [tuple(p) for p in payload]
        with _stage("retrieve"):
            index = build_index(bows, self.dataset.embeddings)
            found = set()
            for query in self.image_ids:
                for other, _score in retrieve(query, index, self.cfg.retrieval):
                    found.add(canonical_pair(query, other))
        pairs = sorted(found)
        self.store.save("pairs", self.pairs_deps, [list(p) for p in pairs])
        return pairs

    # ---- matching and counting ----------------------------------------

    def _count_one(self, pair, filtered) -> list[DefectPairCount]:
        image_a, image_b = pair
        kps_a, descs_a = filtered[image_a]
        kps_b, descs_b = filtered[image_b]
        matches = match_descriptors(
            image_a, descs_a, image_b, descs_b, self.cfg.matching
        )
        pm = PairMatches(image_a=image_a, image_b=image_b, matches=tuple(matches))
        pm = geometric_verify(pm, kps_a, kps_b, self.cfg.matching)
        return count_valid_matches(
            pm,
            kps_a,
            kps_b,
            self.dets_by_image[image_a],
            self.dets_by_image[image_b],
        )

    def counts(self, filtered, pairs) -> list[DefectPairCount]:
        payload = self.store.load("counts", self.counts_deps)
        if payload is not None:
            return [DefectPairCount(a, b, n) for a, b, n in payload]
        with _stage("match_pairs"):
            per_pair = _parallel_map(
                lambda p: self._count_one(p, filtered), pairs, self.cfg.workers
            )
        with _stage("accumulate_counts"):
            table = accumulate_counts(zip(pairs, per_pair))
        self.store.save(
            "counts",
            self.counts_deps,
            [[c.detection_a, c.detection_b, c.valid_count] for c in table],
        )
        return table

    # ---- chains, evaluation, report ------------------------------------

    def graph_and_chains(self, table):
        with _stage("build_graph"):
            graph = build_graph(table, self.cfg.threshold, self.dataset.detections)
        with _stage("build_chains"):
            chains = build_chains(graph)
        return graph, chains

    def evaluate(self, graph: DefectMatchGraph, chains: list[DefectChain]):
        gt = self.dataset.ground_truth
        if gt is None:
            return None
        with _stage("evaluate"):
            predicted_pairs = {edge.pair for edge in graph.edges}
            pairwise = pairwise_metrics(predicted_pairs, set(gt.pairwise_matches))
            predicted_chains = [set(c.members) for c in chains if c.size >= 2]
            chain = chain_metrics(predicted_chains, [set(c) for c in gt.chains])
        return EvalReport(pairwise=pairwise, chain=chain)

    def report(self, graph, chains, pairs, evaluation) -> ChainReport:
        with _stage("report"):
            det_info = {
                d.detection_id: (d.image_id, d.detection_id, d.class_label)
                for d in self.dataset.detections
            }
            by_pair = {edge.pair: edge.valid_count for edge in graph.edges}
            records = []
            singletons = []
            seen: set[str] = set()
            for chain in chains:
                members = tuple(det_info[m] for m in sorted(chain.members))
                seen.update(chain.members)
                if chain.size == 1:
                    singletons.append(members[0])
                    continue
                edges = tuple(
                    (a, b, by_pair[(a, b)])
                    for (a, b) in sorted(by_pair)
                    if a in chain.members and b in chain.members
                )
                records.append(
                    ChainRecord(chain_id=chain.chain_id, members=members, edges=edges)
                )
            if seen != set(graph.nodes):
                raise PipelineError(
                    "report", "chains and singletons do not partition the defects"
                )
            return ChainReport(
                dataset_id=self.dataset.dataset_id,
                config=self.cfg.echo(),
                retrieval_pairs=tuple(pairs),
                chains=tuple(records),
                singletons=tuple(sorted(singletons, key=lambda m: m[1])),
                evaluation=evaluation,
            )


def run_pipeline(
    dataset: Dataset,
    cfg: PipelineConfig,
    *,
    pixels: dict[str, np.ndarray] | None = None,
    work_dir: str | None = None,
    stop_after: str | None = None,
    with_eval: bool | None = None,
) -> ChainReport | dict:
    """Run the pipeline end to end and build the chain report.

    stop_after ∈ {features, index, retrieve, match} exits early with a
    small stage summary (the CLI's resumable subcommands). with_eval
    defaults to evaluating exactly when ground truth is present; True
    demands it.
    """
    runner = _Runner(dataset, cfg, pixels=pixels, work_dir=work_dir)
    features = runner.features()
    if stop_after == "features":
        return {
            "stage": "features",
            "keypoints": {i: len(features[i][0]) for i in runner.image_ids},
        }
    filtered = runner.filtered(features)
    vocab = runner.vocabulary(filtered)
    bows = runner.bows(filtered, vocab)
    if stop_after == "index":
        return {
            "stage": "index",
            "words": 0 if vocab is None else vocab.k,
            "images": len(bows),
        }
    pairs = runner.pairs(bows)
    if stop_after == "retrieve":
        return {"stage": "retrieve", "pairs": [list(p) for p in pairs]}
    table = runner.counts(filtered, pairs)
    if stop_after == "match":
        return {
            "stage": "match",
            "detection_pairs": [[c.detection_a, c.detection_b, c.valid_count] for c in table],
        }
    graph, chains = runner.graph_and_chains(table)
    if with_eval is None:
        with_eval = dataset.ground_truth is not None
    if with_eval and dataset.ground_truth is None:
        raise DataError("evaluation requested but the dataset has no ground truth")
    evaluation = runner.evaluate(graph, chains) if with_eval else None
    return runner.report(graph, chains, pairs, evaluation)


# ---- report serialization ----------------------------------------------


def _result_to_dict(res) -> dict:
    return dataclasses.asdict(res)


def report_to_jsonable(report: ChainReport) -> dict:
    evaluation = None
    if report.evaluation is not None:
        evaluation = {
            "pairwise": _result_to_dict(report.evaluation.pairwise),
            "chain": _result_to_dict(report.evaluation.chain),
        }
    return {
        "schema": REPORT_SCHEMA,
        "dataset_id": report.dataset_id,
        "config": report.config,
        "retrieval_pairs": [list(p) for p in report.retrieval_pairs],
        "chains": [
            {
                "chain_id": c.chain_id,
                "members": [list(m) for m in c.members],
                "edges": [list(e) for e in c.edges],
            }
            for c in report.chains
        ],
        "singletons": [list(m) for m in report.singletons],
        "evaluation": evaluation,
    }


def report_from_jsonable(obj: dict) -> ChainReport:
    if obj.get("schema") != REPORT_SCHEMA:
        raise DataError(f"expected schema {REPORT_SCHEMA!r}, found {obj.get('schema')!r}")
    evaluation = None
    if obj["evaluation"] is not None:
        evaluation = EvalReport(
            pairwise=PairwiseResult(**obj["evaluation"]["pairwise"]),
            chain=ChainResult(**obj["evaluation"]["chain"]),
        )
    return ChainReport(
        dataset_id=obj["dataset_id"],
        config=obj["config"],
        retrieval_pairs=tuple(tuple(p) for p in obj["retrieval_pairs"]),
        chains=tuple(
            ChainRecord(
                chain_id=c["chain_id"],
                members=tuple(tuple(m) for m in c["members"]),
                edges=tuple(tuple(e) for e in c["edges"]),
            )
            for c in obj["chains"]
        ),
        singletons=tuple(tuple(m) for m in obj["singletons"]),
        evaluation=evaluation,
    )


def load_report(path: str) -> ChainReport:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return report_from_jsonable(json.load(fh))
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed report ({exc})") from exc


def _fmt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def emit_report(report: ChainReport, out_dir: str) -> dict[str, str]:
    """Write report.json, chains.csv, and metrics.csv; returns the paths."""
    try:
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "report": os.path.join(out_dir, "report.json"),
            "chains": os.path.join(out_dir, "chains.csv"),
            "metrics": os.path.join(out_dir, "metrics.csv"),
        }
        payload = json.dumps(report_to_jsonable(report), sort_keys=True, indent=2)
        _atomic_write(paths["report"], (payload + "\n").encode())

        rows = ["chain_id,size,n_images,detections"]
        for c in report.chains:
            images = sorted({image_id for image_id, _, _ in c.members})
            dets = [det_id for _, det_id, _ in c.members]
            rows.append(f"{c.chain_id},{len(c.members)},{len(images)},{';'.join(dets)}")
        _atomic_write(paths["chains"], ("\n".join(rows) + "\n").encode())

        rows = ["Image Type,Metric,Precision,Recall"]
        if report.evaluation is not None:
            pw, ch = report.evaluation.pairwise, report.evaluation.chain
            rows.append(
                f"{report.dataset_id},Pairwise,{_fmt(pw.precision)},{_fmt(pw.recall)}"
            )
            rows.append(
                f"{report.dataset_id},Chain,{_fmt(ch.precision)},{_fmt(ch.recall)}"
            )
        _atomic_write(paths["metrics"], ("\n".join(rows) + "\n").encode())
    except OSError as exc:
        raise PipelineError("emit_report", f"cannot write to {out_dir}: {exc}") from exc
    return paths
