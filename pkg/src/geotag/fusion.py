"""Feature fusion: concatenate per-sample modalities in a fixed order.

The order is always [image; title; location], restricted to the members of
the active combo. No rescaling or normalization happens here - raw encoder
outputs and the 2-d location feature are concatenated as-is.
"""

from __future__ import annotations

import numpy as np

from .data_model import Dataset, ModalityCombo, Sample, combo_dim
from .errors import MissingModality


def _segments(sample: Sample, combo: ModalityCombo) -> list[np.ndarray]:
    parts = []
    if combo.uses_image:
        if sample.image_emb is None:
            raise MissingModality("image")
        parts.append(sample.image_emb)
    if combo.uses_title:
        if sample.text_emb is None:
            raise MissingModality("title")
        parts.append(sample.text_emb)
    if combo.uses_location:
        if sample.loc is None:
            raise MissingModality("location")
        parts.append(sample.loc)
    return parts


def fuse(sample: Sample, combo: ModalityCombo) -> np.ndarray:
    """Fused float32 feature vector of length combo_dim(combo)."""
    out = np.concatenate(_segments(sample, combo)).astype(np.float32, copy=False)
    assert out.shape == (combo_dim(combo),)
    return out


def fuse_batch(samples, combo: ModalityCombo) -> np.ndarray:
    """Stack fused vectors for a sequence of samples into an (N, d) matrix."""
    if isinstance(samples, Dataset):
        samples = samples.samples
    n = len(samples)
    out = np.empty((n, combo_dim(combo)), dtype=np.float32)
    for i, s in enumerate(samples):
        offset = 0
        for seg in _segments(s, combo):
            out[i, offset:offset + seg.shape[0]] = seg
            offset += seg.shape[0]
    return out
