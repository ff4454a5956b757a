"""GEOEMB writer, implemented against the published byte layout.

This is a deliberate re-implementation rather than an import of the
training toolkit: the byte format is the contract between the two packages,
and the toolkit's loader is used in tests to validate interop.

Layout: magic ``GEOEMB1\\n`` (8 bytes), u32 little-endian dim, u64
little-endian record count, then per record a u64 little-endian image id
followed by dim little-endian IEEE-754 float32 values. No padding.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"GEOEMB1\n"
_HEADER = struct.Struct("<IQ")


def write_geoemb(path, records: dict[int, np.ndarray], dim: int) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(_HEADER.pack(dim, len(records)))
        for image_id, vec in records.items():
            arr = np.ascontiguousarray(vec, dtype="<f4")
            if arr.shape != (dim,):
                raise ValueError(f"id {image_id}: vector shape {arr.shape}, expected ({dim},)")
            f.write(struct.pack("<Q", image_id))
            f.write(arr.tobytes())
