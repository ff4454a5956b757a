"""Embedding extractor: frozen CLIP ViT-B/32 -> GEOEMB files."""

from .encoder import DEFAULT_MODEL_ID, EMBED_DIM, ClipEncoder, load_encoder
from .extract import extract
from .geoemb import write_geoemb

__version__ = "0.1.0"

__all__ = ["DEFAULT_MODEL_ID", "EMBED_DIM", "ClipEncoder", "load_encoder",
           "extract", "write_geoemb"]
