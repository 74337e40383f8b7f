"""Dataset files: JSONL manifests, detections, and ground truth, plus a
small binary embedding container.

Every text file starts with a schema header line so version drift fails
loudly. Paths inside a manifest are relative to the manifest's directory.
Loaders attach file and line context to every complaint; in-memory
embeddings are float64 arrays that are exactly float32-representable, so
a load -> save -> load cycle is bit-stable.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import DataError
from .model import Detection, GroundTruth, ImageRecord, validate_detection

MANIFEST_SCHEMA = "defectmatch/manifest@1"
DETECTIONS_SCHEMA = "defectmatch/detections@1"
GROUND_TRUTH_SCHEMA = "defectmatch/ground-truth@1"
EMBEDDINGS_MAGIC = b"DMEMB001"


@dataclass(frozen=True, eq=False)
class Dataset:
    dataset_id: str
    records: tuple[ImageRecord, ...]
    detections: tuple[Detection, ...]
    embeddings: dict[str, np.ndarray] | None
    ground_truth: GroundTruth | None

    def record_map(self) -> dict[str, ImageRecord]:
        return {r.image_id: r for r in self.records}


def _read_jsonl(path: str, schema: str):
    """Header-checked JSONL: returns (header, [(line_number, row), ...])."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    rows = []
    header = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
        if header is None:
            header = obj
            got = header.get("schema")
            if got != schema:
                raise DataError(
                    f"{path}:1: expected schema {schema!r}, found {got!r}"
                )
            continue
        rows.append((lineno, obj))
    if header is None:
        raise DataError(f"{path}: empty file, expected schema header {schema!r}")
    return header, rows


def _require(row: dict, key: str, path: str, lineno: int):
    if key not in row:
        raise DataError(f"{path}:{lineno}: record is missing {key!r}")
    return row[key]


def _load_records(path: str):
    header, rows = _read_jsonl(path, MANIFEST_SCHEMA)
    base = os.path.dirname(os.path.abspath(path))
    records = []
    seen = set()
    for lineno, row in rows:
        image_id = _require(row, "image_id", path, lineno)
        if image_id in seen:
            raise DataError(f"{path}:{lineno}: duplicate image_id {image_id!r}")
        seen.add(image_id)
        source = os.path.join(base, _require(row, "source_path", path, lineno))
        try:
            record = ImageRecord(
                image_id=image_id,
                source_path=source,
                width=int(_require(row, "width", path, lineno)),
                height=int(_require(row, "height", path, lineno)),
                acquisition_tag=row.get("acquisition_tag"),
            )
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        if not os.path.exists(record.source_path):
            raise DataError(
                f"{path}:{lineno}: image file not found: {record.source_path}"
            )
        records.append(record)
    return header, base, tuple(records)


def _load_detections(path: str, records: dict[str, ImageRecord]):
    _, rows = _read_jsonl(path, DETECTIONS_SCHEMA)
    detections = []
    seen = set()
    for lineno, row in rows:
        det_id = _require(row, "detection_id", path, lineno)
        if det_id in seen:
            raise DataError(f"{path}:{lineno}: duplicate detection_id {det_id!r}")
        seen.add(det_id)
        image_id = _require(row, "image_id", path, lineno)
        record = records.get(image_id)
        if record is None:
            raise DataError(
                f"{path}:{lineno}: detection {det_id!r} references unknown "
                f"image_id {image_id!r}"
            )
        try:
            det = Detection(
                detection_id=det_id,
                image_id=image_id,
                category=_require(row, "category", path, lineno),
                class_label=_require(row, "class_label", path, lineno),
                region=tuple(
                    (float(x), float(y))
                    for x, y in _require(row, "region", path, lineno)
                ),
                confidence=float(_require(row, "confidence", path, lineno)),
            )
            det = validate_detection(det, record)
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: detection {det_id!r}: {exc}") from exc
        detections.append(det)
    return tuple(detections)


def _load_ground_truth(path: str, detection_ids: set[str]) -> GroundTruth:
    _, rows = _read_jsonl(path, GROUND_TRUTH_SCHEMA)
    pairs = set()
    chains = []
    for lineno, row in rows:
        kind = _require(row, "type", path, lineno)
        if kind == "pair":
            a = _require(row, "a", path, lineno)
            b = _require(row, "b", path, lineno)
            for det_id in (a, b):
                if det_id not in detection_ids:
                    raise DataError(
                        f"{path}:{lineno}: pair references unknown detection "
                        f"{det_id!r}"
                    )
            if a == b:
                raise DataError(f"{path}:{lineno}: pair of a detection with itself")
            pairs.add((min(a, b), max(a, b)))
        elif kind == "chain":
            members = _require(row, "members", path, lineno)
            for det_id in members:
                if det_id not in detection_ids:
                    raise DataError(
                        f"{path}:{lineno}: chain references unknown detection "
                        f"{det_id!r}"
                    )
            if not members:
                raise DataError(f"{path}:{lineno}: empty chain")
            chains.append(frozenset(members))
        else:
            raise DataError(f"{path}:{lineno}: unknown record type {kind!r}")
    try:
        return GroundTruth(pairwise_matches=frozenset(pairs), chains=tuple(chains))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def load_embeddings(path: str) -> dict[str, np.ndarray]:
    """Binary container: magic, u32 dim, u32 count, then per row a
    u16-length-prefixed utf-8 image id and dim little-endian float32s.
    """
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    if blob[:8] != EMBEDDINGS_MAGIC:
        raise DataError(f"{path}: bad magic, not an embedding file")
    if len(blob) < 16:
        raise DataError(f"{path}: truncated header")
    dim, count = struct.unpack_from("<II", blob, 8)
    if dim == 0:
        raise DataError(f"{path}: embedding dimension is zero")
    out: dict[str, np.ndarray] = {}
    offset = 16
    for index in range(count):
        if offset + 2 > len(blob):
            raise DataError(f"{path}: truncated at record {index}")
        (id_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        end = offset + id_len + 4 * dim
        if end > len(blob):
            raise DataError(f"{path}: truncated at record {index}")
        image_id = blob[offset : offset + id_len].decode("utf-8")
        offset += id_len
        vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset).astype(
            np.float64
        )
        offset += 4 * dim
        if image_id in out:
            raise DataError(f"{path}: duplicate embedding for image {image_id!r}")
        norm = float(np.linalg.norm(vec))
        if norm < 1e-12:
            raise DataError(f"{path}: zero-length embedding for image {image_id!r}")
        if abs(norm - 1.0) > 1e-6:
            vec = vec / norm
        # keep values exactly float32-representable so save/load is stable
        out[image_id] = vec.astype(np.float32).astype(np.float64)
    if offset != len(blob):
        raise DataError(f"{path}: {len(blob) - offset} trailing bytes")
    return out


def save_embeddings(path: str, embeddings: dict[str, np.ndarray]) -> None:
    dims = {int(np.asarray(v).size) for v in embeddings.values()}
    if len(dims) > 1:
        raise ValueError(f"inconsistent embedding dimensions: {sorted(dims)}")
    dim = dims.pop() if dims else 0
    parts = [EMBEDDINGS_MAGIC, struct.pack("<II", dim, len(embeddings))]
    for image_id in sorted(embeddings):
        encoded = image_id.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValueError(f"image id too long: {image_id!r}")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(
            np.asarray(embeddings[image_id], dtype="<f4").ravel().tobytes()
        )
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_dataset(manifest_path: str) -> Dataset:
    header, base, records = _load_records(manifest_path)
    record_map = {r.image_id: r for r in records}
    dataset_id = header.get("dataset_id", "dataset")

    detections: tuple[Detection, ...] = ()
    det_rel = header.get("detections")
    if det_rel is not None:
        detections = _load_detections(os.path.join(base, det_rel), record_map)

    embeddings = None
    emb_rel = header.get("embeddings")
    if emb_rel is not None:
        emb_path = os.path.join(base, emb_rel)
        embeddings = load_embeddings(emb_path)
        unknown = sorted(set(embeddings) - set(record_map))
        if unknown:
            raise DataError(
                f"{emb_path}: embedding for unknown image {unknown[0]!r}"
            )
        missing = sorted(set(record_map) - set(embeddings))
        if missing:
            raise DataError(f"{emb_path}: missing embedding for image {missing[0]!r}")

    ground_truth = None
    gt_rel = header.get("ground_truth")
    if gt_rel is not None:
        ground_truth = _load_ground_truth(
            os.path.join(base, gt_rel), {d.detection_id for d in detections}
        )

    return Dataset(
        dataset_id=dataset_id,
        records=records,
        detections=detections,
        embeddings=embeddings,
        ground_truth=ground_truth,
    )


def _dump_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save_dataset(
    out_dir: str,
    dataset_id: str,
    records,
    pixels: dict[str, np.ndarray],
    detections,
    embeddings: dict[str, np.ndarray] | None = None,
    ground_truth: GroundTruth | None = None,
) -> str:
    """Write a complete dataset directory; returns the manifest path.

    Image files land next to the manifest under each record's basename.
    """
    os.makedirs(out_dir, exist_ok=True)
    header = {
        "schema": MANIFEST_SCHEMA,
        "dataset_id": dataset_id,
        "detections": "detections.jsonl",
    }
    if embeddings is not None:
        header["embeddings"] = "embeddings.bin"
    if ground_truth is not None:
        header["ground_truth"] = "ground_truth.jsonl"

    manifest_lines = [_dump_line(header)]
    for record in sorted(records, key=lambda r: r.image_id):
        rel = os.path.basename(record.source_path)
        Image.fromarray(pixels[record.image_id]).save(os.path.join(out_dir, rel))
        row = {
            "image_id": record.image_id,
            "source_path": rel,
            "width": record.width,
            "height": record.height,
        }
        if record.acquisition_tag is not None:
            row["acquisition_tag"] = record.acquisition_tag
        manifest_lines.append(_dump_line(row))
    manifest_path = os.path.join(out_dir, "manifest.jsonl")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(manifest_lines) + "\n")

    det_lines = [_dump_line({"schema": DETECTIONS_SCHEMA})]
    for det in sorted(detections, key=lambda d: d.detection_id):
        det_lines.append(
            _dump_line(
                {
                    "detection_id": det.detection_id,
                    "image_id": det.image_id,
                    "category": det.category,
                    "class_label": det.class_label,
                    "region": [[x, y] for x, y in det.region],
                    "confidence": det.confidence,
                }
            )
        )
    with open(os.path.join(out_dir, "detections.jsonl"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(det_lines) + "\n")

    if embeddings is not None:
        save_embeddings(os.path.join(out_dir, "embeddings.bin"), embeddings)

    if ground_truth is not None:
        gt_lines = [_dump_line({"schema": GROUND_TRUTH_SCHEMA})]
        for a, b in sorted(ground_truth.pairwise_matches):
            gt_lines.append(_dump_line({"type": "pair", "a": a, "b": b}))
        for chain in sorted(ground_truth.chains, key=min):
            gt_lines.append(_dump_line({"type": "chain", "members": sorted(chain)}))
        with open(
            os.path.join(out_dir, "ground_truth.jsonl"), "w", encoding="utf-8"
        ) as fh:
            fh.write("\n".join(gt_lines) + "\n")

    return manifest_path
