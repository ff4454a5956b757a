"""Dataset ingestion: metadata/label CSVs, binary embedding files, packaged
dataset directories, train/validation splitting, and synthetic data.

File formats
------------
Metadata CSV: UTF-8, RFC-4180 quoting, header ``image_id,title,grid_reference,tags``;
the tags field is one quoted, semicolon-separated list of tag names (may be
empty for test records). The grid_reference column holds a letter-form
reference ("TQ3080"); a numeric "easting,northing" pair is accepted as a
fallback.

Label CSV: header ``image_id,label_bits`` where label_bits is a 49-character
'0'/'1' string, index 0 leftmost.

GEOEMB binary embeddings: magic ``GEOEMB1\\n`` (8 bytes), u32 little-endian
dim, u64 little-endian record count, then per record a u64 little-endian
image id followed by dim little-endian IEEE-754 float32 values. No padding,
no footer; round-trips are bit-exact.

A packaged dataset directory bundles aligned GEOEMB files for the image,
title and location features plus a manifest, labels and metadata, so slow
ingestion runs once and training re-reads quickly.
"""

from __future__ import annotations

import csv
import json
import struct
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .data_model import (EMBED_DIM, LOCATION_DIM, NUM_TAGS, Dataset, Sample,
                         TagVocabulary, builtin_vocabulary)
from .errors import (BadMagic, DimMismatch, DuplicateId, EmptyDataset,
                     GeotagError, JoinMismatch, MalformedRow, TruncatedFile,
                     UnknownTag)
from .gridref import en_to_wgs84, gridref_to_latlon, normalize_location, parse_gridref

GEOEMB_MAGIC = b"GEOEMB1\n"
_GEOEMB_HEADER = struct.Struct("<IQ")  # dim, record count

METADATA_HEADER = ["image_id", "title", "grid_reference", "tags"]
MAX_TITLE_LEN = 256


# ---------------------------------------------------------------------------
# metadata and label CSVs

@dataclass(frozen=True)
class MetadataRecord:
    image_id: int
    title: str
    gridref: str
    tags: tuple[str, ...]
    line: int = 0


def parse_metadata_csv(path, vocabulary: Optional[TagVocabulary] = None) -> list[MetadataRecord]:
    """Parse a metadata CSV, validating tag names against the vocabulary."""
    vocab = vocabulary or builtin_vocabulary()
    records: list[MetadataRecord] = []
    seen: set[int] = set()
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(1, "empty file (expected header)") from None
        if header != METADATA_HEADER:
            raise MalformedRow(1, f"bad header {header!r}, expected {METADATA_HEADER!r}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 4:
                raise MalformedRow(line, f"expected 4 fields, got {len(row)}")
            id_text, title, gridref, tags_text = row
            try:
                image_id = int(id_text)
            except ValueError:
                raise MalformedRow(line, f"image_id {id_text!r} is not an integer") from None
            if not 0 <= image_id < 2 ** 64:
                raise MalformedRow(line, f"image_id {image_id} outside unsigned 64-bit range")
            if image_id in seen:
                raise DuplicateId(f"line {line}: duplicate image_id {image_id}")
            seen.add(image_id)
            if len(title) > MAX_TITLE_LEN:
                raise MalformedRow(line, f"title longer than {MAX_TITLE_LEN} characters")
            tags = []
            for token in tags_text.split(";"):
                token = token.strip()
                if not token:
                    continue
                if token not in vocab:
                    raise UnknownTag(token, line)
                tags.append(token)
            records.append(MetadataRecord(image_id, title, gridref.strip(), tuple(tags), line))
    return records


def tags_to_label_vector(tags, vocabulary: TagVocabulary) -> np.ndarray:
    bits = np.zeros(NUM_TAGS, dtype=np.uint8)
    for name in tags:
        bits[vocabulary.index_of(name)] = 1
    return bits


def parse_label_csv(path) -> dict[int, np.ndarray]:
    """Parse ``image_id,label_bits`` rows into 49-wide uint8 vectors."""
    labels: dict[int, np.ndarray] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(1, "empty file (expected header)") from None
        if header != ["image_id", "label_bits"]:
            raise MalformedRow(1, f"bad header {header!r}, expected ['image_id', 'label_bits']")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 2:
                raise MalformedRow(line, f"expected 2 fields, got {len(row)}")
            try:
                image_id = int(row[0])
            except ValueError:
                raise MalformedRow(line, f"image_id {row[0]!r} is not an integer") from None
            bits = row[1].strip()
            if len(bits) != NUM_TAGS or set(bits) - {"0", "1"}:
                raise MalformedRow(line, f"label_bits must be {NUM_TAGS} chars of 0/1")
            if image_id in labels:
                raise DuplicateId(f"line {line}: duplicate image_id {image_id}")
            labels[image_id] = np.frombuffer(bits.encode(), dtype=np.uint8) - ord("0")
    return labels


def write_label_csv(path, labels: Mapping[int, np.ndarray]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["image_id", "label_bits"])
        for image_id, bits in labels.items():
            writer.writerow([image_id, "".join("1" if b else "0" for b in bits)])


# ---------------------------------------------------------------------------
# GEOEMB binary embedding files

def write_embeddings(path, embeddings: Mapping[int, np.ndarray], dim: Optional[int] = None) -> None:
    """Write (id -> float32 vector) records in GEOEMB format, bit-exactly."""
    items = list(embeddings.items())
    if dim is None:
        if not items:
            raise GeotagError("cannot infer dim from an empty embedding map")
        dim = len(items[0][1])
    with open(path, "wb") as f:
        f.write(GEOEMB_MAGIC)
        f.write(_GEOEMB_HEADER.pack(dim, len(items)))
        for image_id, vec in items:
            arr = np.ascontiguousarray(vec, dtype="<f4")
            if arr.shape != (dim,):
                raise DimMismatch(f"id {image_id}: vector shape {arr.shape}, expected ({dim},)")
            f.write(struct.pack("<Q", image_id))
            f.write(arr.tobytes())


def load_embeddings(path, expected_dim: Optional[int] = None) -> dict[int, np.ndarray]:
    """Load a GEOEMB file into an id -> float32 vector map."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != GEOEMB_MAGIC:
        raise BadMagic(f"{path}: bad magic {data[:8]!r}")
    if len(data) < 8 + _GEOEMB_HEADER.size:
        raise TruncatedFile(f"{path}: truncated header")
    dim, count = _GEOEMB_HEADER.unpack_from(data, 8)
    if expected_dim is not None and dim != expected_dim:
        raise DimMismatch(f"{path}: dim {dim}, expected {expected_dim}")
    record = np.dtype([("id", "<u8"), ("vec", "<f4", (dim,))])
    body = data[8 + _GEOEMB_HEADER.size:]
    if len(body) != count * record.itemsize:
        raise TruncatedFile(
            f"{path}: body holds {len(body)} bytes, header promises {count * record.itemsize}")
    rows = np.frombuffer(body, dtype=record)
    out: dict[int, np.ndarray] = {}
    for row in rows:
        image_id = int(row["id"])
        if image_id in out:
            raise DuplicateId(f"{path}: duplicate image_id {image_id}")
        out[image_id] = row["vec"].copy()
    return out


# ---------------------------------------------------------------------------
# packaged dataset directories

MANIFEST_NAME = "manifest.json"
_DATASET_FORMAT = "geotag-dataset"


def save_dataset(dataset: Dataset, out_dir) -> None:
    """Write a packaged dataset directory (manifest + aligned files)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = dataset.samples
    if not samples:
        raise EmptyDataset("refusing to package an empty dataset")

    modalities = []
    files: dict[str, str] = {}
    for name, attr, dim in (("image", "image_emb", EMBED_DIM),
                            ("title", "text_emb", EMBED_DIM),
                            ("location", "loc", LOCATION_DIM)):
        present = [getattr(s, attr) is not None for s in samples]
        if all(present):
            fname = f"{name}s.geoemb"
            write_embeddings(out / fname, {s.id: getattr(s, attr) for s in samples}, dim)
            modalities.append(name)
            files[name] = fname
        elif any(present):
            raise GeotagError(f"modality {name!r} present on some samples but not all")

    labeled = all(s.labels is not None for s in samples)
    if labeled:
        write_label_csv(out / "labels.csv", {s.id: s.labels for s in samples})
        files["labels"] = "labels.csv"
    elif any(s.labels is not None for s in samples):
        raise GeotagError("labels present on some samples but not all")

    with open(out / "metadata.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(METADATA_HEADER)
        for s in samples:
            writer.writerow([s.id, s.title or "", "", ""])
    files["metadata"] = "metadata.csv"

    manifest = {"format": _DATASET_FORMAT, "version": 1, "count": len(samples),
                "modalities": modalities, "labeled": labeled, "files": files}
    with open(out / MANIFEST_NAME, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


def load_dataset(in_dir) -> Dataset:
    """Load a packaged dataset directory written by save_dataset."""
    root = Path(in_dir)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise GeotagError(f"{in_dir}: no {MANIFEST_NAME} (not a packaged dataset)")
    with open(manifest_path, encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("format") != _DATASET_FORMAT:
        raise GeotagError(f"{in_dir}: unknown dataset format {manifest.get('format')!r}")

    files = manifest["files"]
    maps: dict[str, dict[int, np.ndarray]] = {}
    dims = {"image": EMBED_DIM, "title": EMBED_DIM, "location": LOCATION_DIM}
    for name in manifest["modalities"]:
        maps[name] = load_embeddings(root / files[name], expected_dim=dims[name])

    labels = parse_label_csv(root / files["labels"]) if manifest.get("labeled") else {}
    titles: dict[int, str] = {}
    if "metadata" in files:
        for rec in parse_metadata_csv(root / files["metadata"]):
            titles[rec.image_id] = rec.title

    if not maps:
        raise GeotagError(f"{in_dir}: packaged dataset has no modalities")
    first = manifest["modalities"][0]
    ids = list(maps[first].keys())
    if len(ids) != manifest["count"]:
        raise GeotagError(f"{in_dir}: manifest count {manifest['count']} != {len(ids)} records")
    for name, m in maps.items():
        if set(m.keys()) != set(ids):
            raise JoinMismatch(f"{in_dir}: {name} ids disagree with {first} ids")
    if manifest.get("labeled") and set(labels.keys()) != set(ids):
        raise JoinMismatch(f"{in_dir}: label ids disagree with {first} ids")

    samples = tuple(
        Sample(id=i,
               title=titles.get(i) or None,
               image_emb=maps.get("image", {}).get(i),
               text_emb=maps.get("title", {}).get(i),
               loc=maps.get("location", {}).get(i),
               labels=labels.get(i))
        for i in ids)
    return Dataset(samples=samples, vocabulary=builtin_vocabulary())


# ---------------------------------------------------------------------------
# metadata join (the `prepare` flow)

def location_feature_from_gridref(text: str) -> np.ndarray:
    """Grid reference text -> normalized 2-d location feature (float32).

    Letter-form references convert via the cell centroid; a numeric
    "easting,northing" pair is taken as an exact point.
    """
    if "," in text:
        parts = text.split(",")
        if len(parts) != 2:
            raise GeotagError(f"numeric grid reference {text!r} must be 'easting,northing'")
        try:
            e, n = float(parts[0]), float(parts[1])
        except ValueError:
            raise GeotagError(f"numeric grid reference {text!r} is not a coordinate pair") from None
        lat, lon = en_to_wgs84(e, n)
    else:
        lat, lon = gridref_to_latlon(parse_gridref(text))
    return normalize_location(lat, lon).astype(np.float32)


def build_dataset(metadata: list[MetadataRecord],
                  image_embeddings: Mapping[int, np.ndarray],
                  text_embeddings: Mapping[int, np.ndarray],
                  labels: Optional[Mapping[int, np.ndarray]] = None,
                  vocabulary: Optional[TagVocabulary] = None,
                  warn=lambda msg: print(msg, file=sys.stderr)) -> tuple[Dataset, dict]:
    """Join metadata, embeddings and labels on image_id.

    Location features are computed from each record's grid reference; a
    malformed reference is an error naming the source line. Samples missing
    from either embedding file (or from the label source, when one exists)
    are dropped and counted in the returned summary. When both a label file
    and metadata tags exist and disagree, the label file wins with a warning.
    """
    vocab = vocabulary or builtin_vocabulary()
    label_map = dict(labels) if labels is not None else {}
    any_tags = any(rec.tags for rec in metadata)
    labeled = bool(label_map) or any_tags

    summary = {"total": len(metadata), "kept": 0, "missing_image_emb": 0,
               "missing_text_emb": 0, "missing_labels": 0, "label_conflicts": 0}
    samples = []
    for rec in metadata:
        if rec.image_id not in image_embeddings:
            summary["missing_image_emb"] += 1
            continue
        if rec.image_id not in text_embeddings:
            summary["missing_text_emb"] += 1
            continue

        sample_labels = None
        if labeled:
            from_file = label_map.get(rec.image_id)
            from_tags = tags_to_label_vector(rec.tags, vocab) if rec.tags else None
            if from_file is not None and from_tags is not None \
                    and not np.array_equal(from_file, from_tags):
                summary["label_conflicts"] += 1
                warn(f"image_id {rec.image_id}: label file disagrees with metadata tags; "
                     f"label file wins")
            sample_labels = from_file if from_file is not None else from_tags
            if sample_labels is None or int(sample_labels.sum()) == 0:
                summary["missing_labels"] += 1
                continue

        try:
            loc = location_feature_from_gridref(rec.gridref)
        except GeotagError as exc:
            raise GeotagError(f"line {rec.line}: bad grid reference {rec.gridref!r}: {exc}") from exc

        samples.append(Sample(id=rec.image_id, title=rec.title,
                              image_emb=image_embeddings[rec.image_id],
                              text_emb=text_embeddings[rec.image_id],
                              loc=loc, labels=sample_labels))
    summary["kept"] = len(samples)
    if not samples:
        raise JoinMismatch(f"no samples survived the join: {summary}")
    return Dataset(samples=tuple(samples), vocabulary=vocab), summary


# ---------------------------------------------------------------------------
# splitting

def split_train_val(dataset: Dataset, val_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Uniform random, unstratified partition; deterministic per seed.

    The validation set gets round(val_fraction * N) samples (half-up);
    original sample order is preserved within each side.
    """
    n = len(dataset)
    if n == 0:
        raise EmptyDataset("cannot split an empty dataset")
    if not 0.0 < val_fraction < 1.0:
        raise GeotagError(f"val_fraction must be in (0, 1), got {val_fraction}")
    n_val = int(np.floor(val_fraction * n + 0.5))
    rng = np.random.default_rng(seed)
    in_val = np.zeros(n, dtype=bool)
    in_val[rng.permutation(n)[:n_val]] = True
    train = tuple(s for s, v in zip(dataset.samples, in_val) if not v)
    val = tuple(s for s, v in zip(dataset.samples, in_val) if v)
    return (Dataset(train, dataset.vocabulary), Dataset(val, dataset.vocabulary))


# ---------------------------------------------------------------------------
# synthetic data

@dataclass(frozen=True, eq=False)
class SynthTruth:
    """Generating weights for a synthetic dataset.

    Noise-free labels satisfy, bit for bit,
    ``labels[:n_labels] == (weights @ image_emb.astype(f64) + bias) > 0``.
    """

    weights: np.ndarray  # (n_labels, 512) float64
    bias: np.ndarray     # (n_labels,) float64
    n_labels: int
    margin: float


def synth_dataset(n_samples: int, n_labels: int = NUM_TAGS, noise_level: float = 0.0,
                  seed: int = 0, n_clusters: int = 10, cluster_noise: float = 0.012,
                  margin: float = 0.03, class_margin: float = 0.24) -> tuple[Dataset, SynthTruth]:
    """Generate a synthetic dataset with known linear structure.

    Image embeddings are unit vectors around n_clusters random centroids;
    each label is a thresholded linear function of the embedding whose weight
    row is a signed combination of the centroids, giving linearly separable
    labels with a real margin (samples closer than `margin` to any
    hyperplane, or with no positive label, are redrawn). Title embeddings
    and location features are drawn independently of the labels, so only
    image-carrying modality combos contain signal. Label vectors are always
    49-wide; bits at index n_labels and above stay zero.

    noise_level flips each label bit independently after thresholding; rows
    flipped to all-zero get their lowest originally-set bit restored.
    """
    if n_samples < 1:
        raise GeotagError(f"n_samples must be >= 1, got {n_samples}")
    if not 1 <= n_labels <= NUM_TAGS:
        raise GeotagError(f"n_labels must be in [1, {NUM_TAGS}], got {n_labels}")
    rng = np.random.default_rng(seed)
    pos_rate = 0.45  # per-(label, cluster) probability of a positive sign

    centers = rng.standard_normal((n_clusters, EMBED_DIM))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    # Signed cluster patterns per label; redraw rows whose weight vector
    # leaves any cluster centroid closer than class_margin to the hyperplane,
    # and cluster columns that would never set a label bit.
    signs = np.where(rng.random((n_labels, n_clusters)) < pos_rate, 1.0, -1.0)
    for k in range(n_clusters):
        while np.all(signs[:, k] < 0):
            signs[:, k] = np.where(rng.random(n_labels) < pos_rate, 1.0, -1.0)
    weights = np.empty((n_labels, EMBED_DIM))
    for c in range(n_labels):
        for _ in range(5000):
            w = signs[c] @ centers
            w /= np.linalg.norm(w)
            if np.min(np.abs(centers @ w)) >= class_margin:
                weights[c] = w
                break
            signs[c] = np.where(rng.random(n_clusters) < pos_rate, 1.0, -1.0)
        else:
            raise GeotagError("synthetic generator failed to place label hyperplanes")
    bias = np.zeros(n_labels)

    samples = []
    ids = iter(range(1, n_samples + 1))
    made = 0
    attempts = 0
    while made < n_samples:
        attempts += 1
        if attempts > 50 * n_samples + 1000:
            raise GeotagError("synthetic generator rejection rate too high")
        k = int(rng.integers(n_clusters))
        x = centers[k] + cluster_noise * rng.standard_normal(EMBED_DIM)
        x /= np.linalg.norm(x)
        x32 = x.astype(np.float32)
        scores = weights @ x32.astype(np.float64) + bias
        if np.min(np.abs(scores)) < margin or not np.any(scores > 0):
            continue
        bits = np.zeros(NUM_TAGS, dtype=np.uint8)
        bits[:n_labels] = scores > 0
        if noise_level > 0.0:
            flips = rng.random(n_labels) < noise_level
            noisy = bits[:n_labels] ^ flips
            if not noisy.any():
                noisy[np.flatnonzero(bits[:n_labels])[0]] = 1
            bits[:n_labels] = noisy

        text = rng.standard_normal(EMBED_DIM)
        text /= np.linalg.norm(text)
        loc = rng.uniform(0.0, 1.0, LOCATION_DIM)
        samples.append(Sample(id=next(ids), image_emb=x32,
                              text_emb=text.astype(np.float32),
                              loc=loc.astype(np.float32), labels=bits))
        made += 1

    dataset = Dataset(samples=tuple(samples), vocabulary=builtin_vocabulary())
    return dataset, SynthTruth(weights=weights, bias=bias, n_labels=n_labels, margin=margin)
