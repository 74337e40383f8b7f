"""Dataset I/O: JSONL round trips, binary embeddings, error locations."""

import dataclasses
import json
import os
import struct

import numpy as np
import pytest

from defectmatch.dataset import (
    EMBEDDINGS_MAGIC,
    load_dataset,
    load_embeddings,
    save_dataset,
    save_embeddings,
)
from defectmatch.errors import DataError
from defectmatch.synth import SynthConfig, generate

SMALL = SynthConfig(
    seed=11,
    canvas_size=(1600, 1600),
    n_crops=8,
    n_defects=4,
    n_utilities=1,
)


@pytest.fixture(scope="module")
def scene():
    return generate(SMALL)


def save_scene(scene, out_dir):
    return save_dataset(
        str(out_dir),
        "synth-small",
        scene.records,
        scene.pixels,
        scene.detections,
        embeddings=scene.embeddings,
        ground_truth=scene.ground_truth,
    )


class TestRoundTrip:
    def test_load_serialize_load_identical(self, scene, tmp_path):
        from PIL import Image

        manifest = save_scene(scene, tmp_path / "a")
        first = load_dataset(manifest)
        pixels = {
            r.image_id: np.asarray(Image.open(r.source_path)) for r in first.records
        }
        second_manifest = save_dataset(
            str(tmp_path / "b"),
            first.dataset_id,
            first.records,
            pixels,
            first.detections,
            embeddings=first.embeddings,
            ground_truth=first.ground_truth,
        )
        second = load_dataset(second_manifest)

        assert second.dataset_id == first.dataset_id
        strip = lambda r: dataclasses.replace(r, source_path=os.path.basename(r.source_path))
        assert [strip(r) for r in second.records] == [strip(r) for r in first.records]
        assert second.detections == first.detections
        assert set(second.embeddings) == set(first.embeddings)
        for image_id, vec in first.embeddings.items():
            assert np.array_equal(second.embeddings[image_id], vec)
        assert second.ground_truth.pairwise_matches == first.ground_truth.pairwise_matches
        assert set(second.ground_truth.chains) == set(first.ground_truth.chains)

    def test_loaded_matches_scene(self, scene, tmp_path):
        loaded = load_dataset(save_scene(scene, tmp_path))
        assert loaded.detections == tuple(
            sorted(scene.detections, key=lambda d: d.detection_id)
        )
        assert loaded.ground_truth.pairwise_matches == scene.ground_truth.pairwise_matches
        assert set(loaded.ground_truth.chains) == set(scene.ground_truth.chains)

    def test_image_pixels_survive(self, scene, tmp_path):
        from PIL import Image

        loaded = load_dataset(save_scene(scene, tmp_path))
        record = loaded.records[0]
        pixels = np.asarray(Image.open(record.source_path))
        assert np.array_equal(pixels, scene.pixels[record.image_id])


class TestManifest:
    def test_zero_images_is_valid(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text(json.dumps({"schema": "defectmatch/manifest@1", "dataset_id": "empty"}) + "\n")
        ds = load_dataset(str(path))
        assert ds.dataset_id == "empty"
        assert ds.records == ()
        assert ds.detections == ()
        assert ds.embeddings is None
        assert ds.ground_truth is None

    def test_wrong_schema_rejected(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text(json.dumps({"schema": "defectmatch/manifest@2"}) + "\n")
        with pytest.raises(DataError, match="schema"):
            load_dataset(str(path))

    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text(
            json.dumps({"schema": "defectmatch/manifest@1"}) + "\n{not json\n"
        )
        with pytest.raises(DataError, match=r"manifest\.jsonl:2"):
            load_dataset(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="cannot read"):
            load_dataset(str(tmp_path / "nope.jsonl"))

    def test_duplicate_image_id(self, tmp_path):
        from PIL import Image

        Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(tmp_path / "x.png")
        row = {"image_id": "x", "source_path": "x.png", "width": 4, "height": 4}
        path = tmp_path / "manifest.jsonl"
        path.write_text(
            "\n".join(
                [
                    json.dumps({"schema": "defectmatch/manifest@1"}),
                    json.dumps(row),
                    json.dumps(row),
                ]
            )
            + "\n"
        )
        with pytest.raises(DataError, match="duplicate image_id"):
            load_dataset(str(path))

    def test_missing_image_file(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text(
            "\n".join(
                [
                    json.dumps({"schema": "defectmatch/manifest@1"}),
                    json.dumps(
                        {"image_id": "x", "source_path": "gone.png", "width": 4, "height": 4}
                    ),
                ]
            )
            + "\n"
        )
        with pytest.raises(DataError, match="image file not found"):
            load_dataset(str(path))


def write_two_image_manifest(tmp_path, det_rows):
    from PIL import Image

    for name in ("img_a", "img_b"):
        Image.fromarray(np.zeros((64, 64), dtype=np.uint8)).save(tmp_path / f"{name}.png")
    manifest = tmp_path / "manifest.jsonl"
    manifest.write_text(
        "\n".join(
            [
                json.dumps(
                    {
                        "schema": "defectmatch/manifest@1",
                        "dataset_id": "two",
                        "detections": "detections.jsonl",
                    }
                ),
                json.dumps({"image_id": "img_a", "source_path": "img_a.png", "width": 64, "height": 64}),
                json.dumps({"image_id": "img_b", "source_path": "img_b.png", "width": 64, "height": 64}),
            ]
        )
        + "\n"
    )
    (tmp_path / "detections.jsonl").write_text(
        "\n".join([json.dumps({"schema": "defectmatch/detections@1"})] + [json.dumps(r) for r in det_rows]) + "\n"
    )
    return str(manifest)


def det_row(det_id, image_id, **overrides):
    row = {
        "detection_id": det_id,
        "image_id": image_id,
        "category": "defect",
        "class_label": "crack",
        "region": [[10.0, 10.0], [30.0, 10.0], [30.0, 30.0], [10.0, 30.0]],
        "confidence": 0.9,
    }
    row.update(overrides)
    return row


class TestDetections:
    def test_unknown_image_id_names_record(self, tmp_path):
        manifest = write_two_image_manifest(tmp_path, [det_row("d1", "img_missing")])
        with pytest.raises(DataError, match=r"'d1'.*unknown image_id 'img_missing'"):
            load_dataset(manifest)

    def test_duplicate_detection_id(self, tmp_path):
        manifest = write_two_image_manifest(
            tmp_path, [det_row("d1", "img_a"), det_row("d1", "img_b")]
        )
        with pytest.raises(DataError, match="duplicate detection_id 'd1'"):
            load_dataset(manifest)

    def test_detection_validation_applied(self, tmp_path):
        manifest = write_two_image_manifest(
            tmp_path, [det_row("d1", "img_a", class_label="unicorn")]
        )
        with pytest.raises(DataError, match=r"detections\.jsonl:2.*unicorn"):
            load_dataset(manifest)

    def test_region_clipped_to_bounds(self, tmp_path):
        manifest = write_two_image_manifest(
            tmp_path,
            [det_row("d1", "img_a", region=[[-10.0, 10.0], [30.0, 10.0], [30.0, 30.0], [-10.0, 30.0]])],
        )
        ds = load_dataset(manifest)
        assert all(x >= 0.0 for x, _ in ds.detections[0].region)


class TestGroundTruthFile:
    def write(self, tmp_path, gt_rows):
        manifest = write_two_image_manifest(
            tmp_path, [det_row("d1", "img_a"), det_row("d2", "img_b")]
        )
        text = json.loads(open(manifest).readline())
        text["ground_truth"] = "ground_truth.jsonl"
        lines = open(manifest).read().splitlines()
        lines[0] = json.dumps(text)
        open(manifest, "w").write("\n".join(lines) + "\n")
        (tmp_path / "ground_truth.jsonl").write_text(
            "\n".join([json.dumps({"schema": "defectmatch/ground-truth@1"})] + [json.dumps(r) for r in gt_rows]) + "\n"
        )
        return manifest

    def test_pairs_and_chains(self, tmp_path):
        manifest = self.write(
            tmp_path,
            [
                {"type": "pair", "a": "d2", "b": "d1"},
                {"type": "chain", "members": ["d1", "d2"]},
            ],
        )
        gt = load_dataset(manifest).ground_truth
        assert gt.pairwise_matches == frozenset({("d1", "d2")})
        assert gt.chains == (frozenset({"d1", "d2"}),)

    def test_unknown_detection_in_pair(self, tmp_path):
        manifest = self.write(tmp_path, [{"type": "pair", "a": "d1", "b": "ghost"}])
        with pytest.raises(DataError, match="unknown detection 'ghost'"):
            load_dataset(manifest)

    def test_unknown_detection_in_chain(self, tmp_path):
        manifest = self.write(tmp_path, [{"type": "chain", "members": ["d1", "ghost"]}])
        with pytest.raises(DataError, match="unknown detection 'ghost'"):
            load_dataset(manifest)

    def test_overlapping_chains_rejected(self, tmp_path):
        manifest = self.write(
            tmp_path,
            [
                {"type": "chain", "members": ["d1", "d2"]},
                {"type": "chain", "members": ["d1"]},
            ],
        )
        with pytest.raises(DataError, match="overlap"):
            load_dataset(manifest)


class TestEmbeddingsCodec:
    def unit(self, rng, dim=64):
        v = rng.normal(size=dim)
        return v / np.linalg.norm(v)

    def test_bit_exact_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        path = str(tmp_path / "emb.bin")
        save_embeddings(path, {"a": self.unit(rng), "b": self.unit(rng)})
        first = load_embeddings(path)
        bytes_one = open(path, "rb").read()

        path2 = str(tmp_path / "emb2.bin")
        save_embeddings(path2, first)
        assert open(path2, "rb").read() == bytes_one
        second = load_embeddings(path2)
        assert set(second) == set(first)
        for key in first:
            assert np.array_equal(second[key], first[key])

    def test_loader_normalizes(self, tmp_path):
        path = str(tmp_path / "emb.bin")
        save_embeddings(path, {"a": np.full(16, 3.0)})
        vec = load_embeddings(path)["a"]
        assert vec.shape == (16,)
        assert abs(np.linalg.norm(vec) - 1.0) < 1e-6

    def test_zero_vector_rejected(self, tmp_path):
        path = str(tmp_path / "emb.bin")
        save_embeddings(path, {"a": np.zeros(16)})
        with pytest.raises(DataError, match="zero-length embedding for image 'a'"):
            load_embeddings(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "emb.bin"
        path.write_bytes(b"NOTEMB00" + b"\x00" * 8)
        with pytest.raises(DataError, match="bad magic"):
            load_embeddings(str(path))

    def test_zero_dimension_rejected(self, tmp_path):
        path = tmp_path / "emb.bin"
        path.write_bytes(EMBEDDINGS_MAGIC + struct.pack("<II", 0, 0))
        with pytest.raises(DataError, match="dimension is zero"):
            load_embeddings(str(path))

    def test_truncated_record(self, tmp_path):
        path = str(tmp_path / "emb.bin")
        save_embeddings(path, {"a": np.full(16, 1.0)})
        blob = open(path, "rb").read()
        open(path, "wb").write(blob[:-4])
        with pytest.raises(DataError, match="truncated at record 0"):
            load_embeddings(path)

    def test_duplicate_id(self, tmp_path):
        row = struct.pack("<H", 1) + b"a" + np.ones(2, dtype="<f4").tobytes()
        path = tmp_path / "emb.bin"
        path.write_bytes(EMBEDDINGS_MAGIC + struct.pack("<II", 2, 2) + row + row)
        with pytest.raises(DataError, match="duplicate embedding for image 'a'"):
            load_embeddings(str(path))

    def test_mixed_dimensions_rejected_on_save(self, tmp_path):
        with pytest.raises(ValueError, match="inconsistent embedding dimensions"):
            save_embeddings(
                str(tmp_path / "emb.bin"), {"a": np.ones(4), "b": np.ones(8)}
            )


class TestEmbeddingCoverage:
    def test_embedding_for_unknown_image(self, scene, tmp_path):
        manifest = save_scene(scene, tmp_path)
        emb = dict(scene.embeddings)
        emb["phantom"] = np.ones(64) / 8.0
        save_embeddings(os.path.join(str(tmp_path), "embeddings.bin"), emb)
        with pytest.raises(DataError, match="unknown image 'phantom'"):
            load_dataset(manifest)

    def test_missing_embedding_for_image(self, scene, tmp_path):
        manifest = save_scene(scene, tmp_path)
        emb = dict(scene.embeddings)
        dropped = sorted(emb)[0]
        del emb[dropped]
        save_embeddings(os.path.join(str(tmp_path), "embeddings.bin"), emb)
        with pytest.raises(DataError, match=f"missing embedding for image '{dropped}'"):
            load_dataset(manifest)
