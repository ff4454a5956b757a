"""Trainable classification heads with explicit forward and backward passes.

Two head kinds: a single affine layer, and a one-hidden-layer MLP (ReLU,
inverted dropout). Parameters live in plain numpy arrays; backward() is the
exact vector-Jacobian product, so composing it with a loss gradient yields
the exact parameter gradient of that loss.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data_model import ModalityCombo
from .errors import BadMagic, DimMismatch, GeotagError, StaleCache, TruncatedFile

HIDDEN_WIDTH = 256
DEFAULT_DROPOUT = 0.5

_CKPT_MAGIC = b"GEOCKPT1"
_CKPT_HEADER = struct.Struct("<BBIIIfQI")  # combo, kind, d, n_out, hidden, dropout, seed, epoch
_COMBOS = tuple(ModalityCombo)


@dataclass
class LinearHead:
    W: np.ndarray  # (n_out, d)
    b: np.ndarray  # (n_out,)

    kind = "linear"
    param_names = ("W", "b")

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]

    def copy(self) -> "LinearHead":
        return LinearHead(self.W.copy(), self.b.copy())


@dataclass
class MlpHead:
    W1: np.ndarray  # (hidden, d)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (n_out, hidden)
    b2: np.ndarray  # (n_out,)
    dropout_p: float = DEFAULT_DROPOUT

    kind = "mlp"
    param_names = ("W1", "b1", "W2", "b2")

    def __post_init__(self):
        if not 0.0 <= self.dropout_p < 1.0:
            raise GeotagError(f"dropout_p must be in [0, 1), got {self.dropout_p}")

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def n_out(self) -> int:
        return self.W2.shape[0]

    def copy(self) -> "MlpHead":
        return MlpHead(self.W1.copy(), self.b1.copy(),
                       self.W2.copy(), self.b2.copy(), self.dropout_p)


Head = LinearHead | MlpHead


@dataclass
class ForwardCache:
    """Per-batch intermediates kept for the matching backward() call."""

    x: np.ndarray
    logits: np.ndarray
    pre: Optional[np.ndarray] = None      # MLP pre-activation
    dropped: Optional[np.ndarray] = None  # MLP hidden after ReLU and dropout
    mask: Optional[np.ndarray] = None     # inverted-dropout mask (None in eval)


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int, dtype) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_out, fan_in)).astype(dtype)


def init_head(kind: str, d: int, seed: int, n_out: int = 49,
              hidden: int = HIDDEN_WIDTH, dropout_p: float = DEFAULT_DROPOUT,
              dtype=np.float32) -> Head:
    """Glorot-uniform weights, zero biases; deterministic per seed."""
    if d < 1:
        raise GeotagError(f"input dim must be >= 1, got {d}")
    rng = np.random.default_rng(seed)
    if kind == "linear":
        return LinearHead(_glorot(rng, n_out, d, dtype), np.zeros(n_out, dtype=dtype))
    if kind == "mlp":
        return MlpHead(_glorot(rng, hidden, d, dtype), np.zeros(hidden, dtype=dtype),
                       _glorot(rng, n_out, hidden, dtype), np.zeros(n_out, dtype=dtype),
                       dropout_p)
    raise GeotagError(f"unknown head kind {kind!r} (expected 'linear' or 'mlp')")


def forward(head: Head, batch: np.ndarray, mode: str = "eval",
            rng: Optional[np.random.Generator] = None) -> tuple[np.ndarray, ForwardCache]:
    """Compute logits for a (B, d) batch.

    In train mode the MLP applies inverted dropout: surviving hidden units
    are scaled by 1/(1-p), so eval mode needs no rescaling and is a pure
    deterministic function of (params, input).
    """
    if mode not in ("train", "eval"):
        raise GeotagError(f"mode must be 'train' or 'eval', got {mode!r}")
    batch = np.asarray(batch)
    if batch.ndim != 2 or batch.shape[1] != head.input_dim:
        raise DimMismatch(
            f"batch shape {batch.shape} incompatible with head input dim {head.input_dim}")

    if isinstance(head, LinearHead):
        logits = batch @ head.W.T + head.b
        return logits, ForwardCache(x=batch, logits=logits)

    pre = batch @ head.W1.T + head.b1
    hidden = np.maximum(pre, 0)
    mask = None
    if mode == "train" and head.dropout_p > 0.0:
        if rng is None:
            raise GeotagError("train-mode forward on an MLP head requires an rng")
        keep = 1.0 - head.dropout_p
        mask = (rng.random(hidden.shape) < keep).astype(hidden.dtype) / keep
        hidden = hidden * mask
    logits = hidden @ head.W2.T + head.b2
    return logits, ForwardCache(x=batch, logits=logits, pre=pre, dropped=hidden, mask=mask)


def backward(head: Head, cache: ForwardCache, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Exact parameter gradients via the vector-Jacobian product.

    grad_logits is d(loss)/d(logits) for the batch that produced `cache`;
    the dropout mask is treated as fixed, so gradient flows only through
    surviving units. Sums over the batch, so whatever reduction the loss
    gradient carries (mean over B x C here) is preserved exactly.
    """
    grad_logits = np.asarray(grad_logits)
    if grad_logits.shape != cache.logits.shape or cache.x.shape[0] != grad_logits.shape[0]:
        raise StaleCache(
            f"grad shape {grad_logits.shape} does not match cached logits {cache.logits.shape}")

    if isinstance(head, LinearHead):
        return {"W": grad_logits.T @ cache.x, "b": grad_logits.sum(axis=0)}

    g_w2 = grad_logits.T @ cache.dropped
    g_b2 = grad_logits.sum(axis=0)
    g_hidden = grad_logits @ head.W2
    if cache.mask is not None:
        g_hidden = g_hidden * cache.mask
    g_pre = g_hidden * (cache.pre > 0)
    return {"W1": g_pre.T @ cache.x, "b1": g_pre.sum(axis=0),
            "W2": g_w2, "b2": g_b2}


def save_checkpoint(head: Head, path, combo: ModalityCombo,
                    seed: int = 0, epoch: int = 0) -> None:
    """Write a binary checkpoint: magic, combo/kind/dims header, f32 params.

    Parameter order: W, b for linear heads; W1, b1, W2, b2 for MLP heads,
    each row-major little-endian float32.
    """
    kind_code = 0 if isinstance(head, LinearHead) else 1
    hidden = 0 if isinstance(head, LinearHead) else head.W1.shape[0]
    dropout = 0.0 if isinstance(head, LinearHead) else head.dropout_p
    header = _CKPT_HEADER.pack(_COMBOS.index(combo), kind_code, head.input_dim,
                               head.n_out, hidden, dropout, seed, epoch)
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(header)
        for name in head.param_names:
            f.write(np.ascontiguousarray(getattr(head, name), dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[Head, dict]:
    """Read a checkpoint; returns (head, meta) with combo/seed/epoch in meta."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != _CKPT_MAGIC:
        raise BadMagic(f"{path}: not a checkpoint file (magic {data[:8]!r})")
    if len(data) < 8 + _CKPT_HEADER.size:
        raise TruncatedFile(f"{path}: truncated checkpoint header")
    combo_i, kind_code, d, n_out, hidden, dropout, seed, epoch = \
        _CKPT_HEADER.unpack_from(data, 8)
    if combo_i >= len(_COMBOS) or kind_code not in (0, 1) \
            or max(d, n_out, hidden) > 10 ** 7:
        raise GeotagError(f"{path}: corrupt checkpoint header")
    if kind_code == 0:
        shapes = [("W", (n_out, d)), ("b", (n_out,))]
    else:
        shapes = [("W1", (hidden, d)), ("b1", (hidden,)),
                  ("W2", (n_out, hidden)), ("b2", (n_out,))]
    offset = 8 + _CKPT_HEADER.size
    params = {}
    for name, shape in shapes:
        nbytes = 4 * int(np.prod(shape))
        if offset + nbytes > len(data):
            raise TruncatedFile(f"{path}: truncated while reading {name}")
        params[name] = np.frombuffer(data[offset:offset + nbytes], dtype="<f4").reshape(shape).copy()
        offset += nbytes
    if offset != len(data):
        raise GeotagError(f"{path}: {len(data) - offset} trailing bytes")
    head = LinearHead(**params) if kind_code == 0 else MlpHead(**params, dropout_p=dropout)
    meta = {"combo": _COMBOS[combo_i], "seed": seed, "epoch": epoch}
    return head, meta
