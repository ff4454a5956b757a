"""Extraction pipeline tests.

Everything except TestRealClipSmoke runs offline with a deterministic stub
encoder; the smoke test needs the actual pretrained weights and skips (with
the reason) when they cannot be loaded in the environment.
"""

import csv
import hashlib
import json

import numpy as np
import pytest
from PIL import Image

from geotag_extractor.extract import extract, read_titles, scan_images
from geotag_extractor.geoemb import write_geoemb

# interop target: the training toolkit's loader, used only in tests
from geotag.ingest import load_embeddings


class StubEncoder:
    """Deterministic 512-d embeddings derived from input content hashes."""

    model_id = "stub-encoder-for-tests"

    @staticmethod
    def _from_bytes(payload: bytes) -> np.ndarray:
        seed = int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")
        return np.random.default_rng(seed).standard_normal(512).astype(np.float32)

    def embed_images(self, images):
        return np.stack([self._from_bytes(img.tobytes()) for img in images])

    def embed_texts(self, texts):
        return np.stack([self._from_bytes(t.encode()) for t in texts])

    def weights_hash(self):
        return "stub"


def _solid_image(color) -> Image.Image:
    return Image.new("RGB", (224, 224), color)


def _write_inputs(tmp_path, n=5, missing_title_for=(), corrupt=()):
    images = tmp_path / "images"
    images.mkdir()
    colors = [(30 * i % 256, 60 * i % 256, 90 * i % 256) for i in range(1, n + 1)]
    for i, color in enumerate(colors, start=1):
        _solid_image(color).save(images / f"{i}.png")
    for i in corrupt:
        (images / f"{i}.png").write_bytes(b"not an image at all")

    meta = tmp_path / "metadata.csv"
    with open(meta, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["image_id", "title", "grid_reference", "tags"])
        for i in range(1, n + 1):
            title = "" if i in missing_title_for else f"photo number {i}"
            writer.writerow([i, title, "TQ3080", ""])
    return images, meta


class TestScanAndTitles:
    def test_scan_finds_ids_and_ignores_noise(self, tmp_path):
        images, _ = _write_inputs(tmp_path, n=3)
        (images / "notes.txt").write_text("hi")
        _solid_image("red").save(images / "cover_art.png")  # non-numeric stem
        found, ignored = scan_images(images)
        assert sorted(found) == [1, 2, 3]
        assert ignored == 2

    def test_read_titles(self, tmp_path):
        _, meta = _write_inputs(tmp_path, n=2, missing_title_for={2})
        titles = read_titles(meta)
        assert titles == {1: "photo number 1", 2: ""}


class TestExtractOffline:
    def test_writes_both_files_with_full_record_count(self, tmp_path):
        images, meta = _write_inputs(tmp_path, n=10)
        out_img, out_txt = tmp_path / "img.geoemb", tmp_path / "txt.geoemb"
        summary = extract(images, meta, out_img, out_txt, batch_size=4,
                          encoder=StubEncoder())
        assert summary["embedded"] == 10
        img = load_embeddings(out_img, expected_dim=512)   # primary loader
        txt = load_embeddings(out_txt, expected_dim=512)
        assert len(img) == 10 and len(txt) == 10
        assert set(img) == set(txt) == set(range(1, 11))

    def test_missing_title_embedded_as_empty_string_and_counted(self, tmp_path):
        images, meta = _write_inputs(tmp_path, n=3, missing_title_for={2})
        out_img, out_txt = tmp_path / "img.geoemb", tmp_path / "txt.geoemb"
        encoder = StubEncoder()
        summary = extract(images, meta, out_img, out_txt, batch_size=2, encoder=encoder)
        assert summary["missing_titles"] == 1
        txt = load_embeddings(out_txt)
        empty = encoder.embed_texts([""])[0]
        assert np.array_equal(txt[2], empty)
        assert not np.array_equal(txt[1], empty)

    def test_unreadable_image_skipped_with_report(self, tmp_path):
        images, meta = _write_inputs(tmp_path, n=4, corrupt={3})
        out_img, out_txt = tmp_path / "img.geoemb", tmp_path / "txt.geoemb"
        summary = extract(images, meta, out_img, out_txt, batch_size=8,
                          encoder=StubEncoder())
        assert summary["unreadable"] == [3]
        assert summary["embedded"] == 3
        assert set(load_embeddings(out_img)) == {1, 2, 4}

    def test_deterministic_output_bytes(self, tmp_path):
        images, meta = _write_inputs(tmp_path, n=4)
        paths = [(tmp_path / f"img{k}.geoemb", tmp_path / f"txt{k}.geoemb")
                 for k in (1, 2)]
        for out_img, out_txt in paths:
            extract(images, meta, out_img, out_txt, batch_size=3, encoder=StubEncoder())
        assert paths[0][0].read_bytes() == paths[1][0].read_bytes()
        assert paths[0][1].read_bytes() == paths[1][1].read_bytes()

    def test_provenance_sidecar(self, tmp_path):
        images, meta = _write_inputs(tmp_path, n=2)
        out_img, out_txt = tmp_path / "img.geoemb", tmp_path / "txt.geoemb"
        extract(images, meta, out_img, out_txt, batch_size=2, encoder=StubEncoder())
        sidecar = json.loads((tmp_path / "img.geoemb.provenance.json").read_text())
        assert sidecar["model_id"] == "stub-encoder-for-tests"
        assert sidecar["weights_hash"] == "stub"
        assert sidecar["embedded"] == 2

    def test_geoemb_bytes_match_primary_writer(self, tmp_path):
        # byte-level interop: same payload through both writers
        from geotag.ingest import write_embeddings
        rng = np.random.default_rng(0)
        payload = {1: rng.standard_normal(512).astype(np.float32),
                   9: rng.standard_normal(512).astype(np.float32)}
        ours, theirs = tmp_path / "a.geoemb", tmp_path / "b.geoemb"
        write_geoemb(ours, payload, 512)
        write_embeddings(theirs, payload, dim=512)
        assert ours.read_bytes() == theirs.read_bytes()


class TestCli:
    def test_unloadable_model_exits_2(self, tmp_path):
        from geotag_extractor.cli import main
        images, meta = _write_inputs(tmp_path, n=1)
        code = main(["--images", str(images), "--metadata", str(meta),
                     "--out-img", str(tmp_path / "i.geoemb"),
                     "--out-txt", str(tmp_path / "t.geoemb"),
                     "--model", "definitely/not-a-model"])
        assert code == 2


def _try_load_clip():
    try:
        from geotag_extractor.encoder import load_encoder
        return load_encoder()
    except Exception as exc:
        pytest.skip(f"pretrained CLIP weights unavailable in this environment: {exc}")


class TestRealClipSmoke:
    def test_matched_pairs_beat_mismatched_pairs(self, tmp_path):
        encoder = _try_load_clip()
        colors = ["red", "green", "blue", "yellow", "purple",
                  "orange", "black", "white", "pink", "brown"]
        images_dir = tmp_path / "images"
        images_dir.mkdir()
        for i, color in enumerate(colors, start=1):
            _solid_image(color).save(images_dir / f"{i}.png")
        meta = tmp_path / "metadata.csv"
        with open(meta, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["image_id", "title", "grid_reference", "tags"])
            for i, color in enumerate(colors, start=1):
                writer.writerow([i, f"a photo of a solid {color} square", "TQ3080", ""])

        out_img, out_txt = tmp_path / "img.geoemb", tmp_path / "txt.geoemb"
        summary = extract(images_dir, meta, out_img, out_txt, batch_size=4,
                          encoder=encoder)
        assert summary["embedded"] == 10

        img = load_embeddings(out_img, expected_dim=512)
        txt = load_embeddings(out_txt, expected_dim=512)
        assert len(img) == 10 and len(txt) == 10

        def cos(a, b):
            return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))

        matched = np.mean([cos(img[i], txt[i]) for i in range(1, 11)])
        mismatched = np.mean([cos(img[i], txt[j])
                              for i in range(1, 11) for j in range(1, 11) if i != j])
        assert matched > mismatched
