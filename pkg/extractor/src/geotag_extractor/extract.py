"""One-shot extraction: embed a directory of images and their titles, write
GEOEMB files the training toolkit loads directly.

Images must be named ``<image_id>.<ext>``. Titles come from the metadata
CSV (header ``image_id,title,grid_reference,tags``); an id with no title
row, or an empty title, is embedded as the empty string and counted.
Unreadable images are skipped and reported. Output order is ascending id,
so extraction is deterministic given the model weights.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .encoder import EMBED_DIM
from .geoemb import write_geoemb

IMAGE_EXTENSIONS = {".jpg", ".jpeg", ".png", ".bmp", ".gif", ".tiff", ".webp"}


def read_titles(metadata_csv) -> dict[int, str]:
    titles: dict[int, str] = {}
    with open(metadata_csv, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["image_id", "title", "grid_reference", "tags"]:
            raise ValueError(f"{metadata_csv}: bad header {header!r}")
        for row in reader:
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{metadata_csv}:{reader.line_num}: expected 4 fields")
            titles[int(row[0])] = row[1]
    return titles


def scan_images(images_dir) -> tuple[dict[int, Path], int]:
    """Map image_id -> file path; returns (mapping, ignored-file count)."""
    found: dict[int, Path] = {}
    ignored = 0
    for path in sorted(Path(images_dir).iterdir()):
        if not path.is_file() or path.suffix.lower() not in IMAGE_EXTENSIONS:
            ignored += 1
            continue
        try:
            image_id = int(path.stem)
        except ValueError:
            ignored += 1
            continue
        if image_id in found:
            raise ValueError(f"duplicate image id {image_id}: {path} and {found[image_id]}")
        found[image_id] = path
    return found, ignored


def extract(images_dir, metadata_csv, out_img_geoemb, out_txt_geoemb,
            batch_size: int, encoder) -> dict:
    """Run the extraction; returns a summary dict (counts + skipped ids).

    A provenance sidecar ``<out_img_geoemb>.provenance.json`` records the
    encoder's model identifier and weights hash.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    paths, ignored = scan_images(images_dir)
    titles = read_titles(metadata_csv)

    loaded: list[tuple[int, Image.Image]] = []
    unreadable: list[int] = []
    for image_id, path in sorted(paths.items()):
        try:
            with Image.open(path) as img:
                loaded.append((image_id, img.convert("RGB")))
        except Exception:
            unreadable.append(image_id)

    missing_titles = sum(1 for image_id, _ in loaded if not titles.get(image_id))

    img_records: dict[int, np.ndarray] = {}
    txt_records: dict[int, np.ndarray] = {}
    for start in range(0, len(loaded), batch_size):
        batch = loaded[start:start + batch_size]
        ids = [i for i, _ in batch]
        img_vecs = encoder.embed_images([img for _, img in batch])
        txt_vecs = encoder.embed_texts([titles.get(i) or "" for i in ids])
        for row, image_id in enumerate(ids):
            img_records[image_id] = img_vecs[row]
            txt_records[image_id] = txt_vecs[row]

    write_geoemb(out_img_geoemb, img_records, EMBED_DIM)
    write_geoemb(out_txt_geoemb, txt_records, EMBED_DIM)

    summary = {
        "embedded": len(img_records),
        "unreadable": unreadable,
        "missing_titles": missing_titles,
        "ignored_files": ignored,
        "model_id": getattr(encoder, "model_id", "unknown"),
    }
    provenance = dict(summary)
    provenance["weights_hash"] = (encoder.weights_hash()
                                  if hasattr(encoder, "weights_hash") else "unknown")
    with open(f"{out_img_geoemb}.provenance.json", "w", encoding="utf-8") as f:
        json.dump(provenance, f, indent=2)
        f.write("\n")
    return summary
