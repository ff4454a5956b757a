"""Frozen CLIP ViT-B/32 encoder wrapper.

Embeddings are written unnormalized (raw projection outputs); downstream
classification heads absorb scale, and L2 normalization would discard it.
The model identifier and a hash of its weights go into a sidecar provenance
file so runs are attributable to an exact weight release.
"""

from __future__ import annotations

import hashlib

import numpy as np

DEFAULT_MODEL_ID = "openai/clip-vit-base-patch32"
EMBED_DIM = 512


class ClipEncoder:
    """Batched image/text embedding with frozen pretrained CLIP weights."""

    def __init__(self, model_id: str = DEFAULT_MODEL_ID, device: str = "cpu"):
        import torch
        from transformers import CLIPModel, CLIPProcessor

        self.model_id = model_id
        self.device = device
        self.model = CLIPModel.from_pretrained(model_id).to(device).eval()
        for p in self.model.parameters():
            p.requires_grad_(False)
        self.processor = CLIPProcessor.from_pretrained(model_id)
        self._torch = torch

        dim = self.model.config.projection_dim
        if dim != EMBED_DIM:
            raise ValueError(f"{model_id} projects to {dim} dims, expected {EMBED_DIM}")

    def embed_images(self, images) -> np.ndarray:
        inputs = self.processor(images=images, return_tensors="pt").to(self.device)
        with self._torch.no_grad():
            feats = self.model.get_image_features(**inputs)
        return feats.cpu().numpy().astype(np.float32)

    def embed_texts(self, texts) -> np.ndarray:
        inputs = self.processor(text=list(texts), return_tensors="pt",
                                padding=True, truncation=True).to(self.device)
        with self._torch.no_grad():
            feats = self.model.get_text_features(**inputs)
        return feats.cpu().numpy().astype(np.float32)

    def weights_hash(self) -> str:
        digest = hashlib.sha256()
        state = self.model.state_dict()
        for name in sorted(state):
            digest.update(name.encode())
            digest.update(state[name].cpu().numpy().tobytes())
        return digest.hexdigest()


def load_encoder(model_id: str = DEFAULT_MODEL_ID, device: str = "cpu") -> ClipEncoder:
    return ClipEncoder(model_id=model_id, device=device)
