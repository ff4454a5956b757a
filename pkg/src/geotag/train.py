"""Training loop: stable BCE-with-logits, MixUp, cosine-annealed learning
rate, Adam/SGD, early stopping on validation subset accuracy, and
best-checkpoint selection.

All loss and metric accumulation happens in float64 regardless of the
parameter dtype. Every source of randomness (shuffling, dropout, MixUp)
derives from the single config seed through numpy SeedSequence spawning, so
a fixed config and dataset reproduce the run history bit for bit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data_model import Dataset, combo_dim
from .errors import (BatchTooSmall, ConfigError, EmptyDataset, EmptyTrainSet,
                     GeotagError, NonFiniteInput, ShapeMismatch)
from .evaluate import f1_from_decisions, subset_accuracy_from_decisions
from .fusion import fuse_batch
from .heads import Head, backward, forward, init_head
from .train_config import TrainConfig, parse_config_file, write_config_file  # noqa: F401

_VAL_CHUNK = 65536


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    """Overflow-free logistic function for arbitrary logit magnitudes."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy computed from logits, and its gradient.

    Uses the standard stable form max(x,0) - x*y + log1p(exp(-|x|)), so the
    loss is finite for any finite logit. Targets may be soft (MixUp output).
    Returns (loss, d loss / d logits); the gradient carries the mean
    reduction over all B*C entries.
    """
    x = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeMismatch(f"logits {x.shape} vs targets {y.shape}")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise NonFiniteInput("bce_with_logits requires finite logits and targets")
    if np.any(y < 0) or np.any(y > 1):
        raise GeotagError("targets must lie in [0, 1]")
    per_entry = np.maximum(x, 0) - x * y + np.log1p(np.exp(-np.abs(x)))
    loss = float(per_entry.mean())
    grad = (stable_sigmoid(x) - y) / x.size
    return loss, grad


def mixup(batch_x: np.ndarray, batch_y: np.ndarray, alpha: float,
          rng: np.random.Generator, per_sample: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Convex-combine rows of a batch with a shuffled copy of itself.

    lambda ~ Beta(alpha, alpha), one draw per batch (or per sample when
    per_sample is set); both inputs and targets are mixed, so targets become
    soft values in [0, 1].
    """
    batch_x = np.asarray(batch_x)
    batch_y = np.asarray(batch_y)
    if batch_x.shape[0] < 2:
        raise BatchTooSmall(f"mixup needs >= 2 rows, got {batch_x.shape[0]}")
    if batch_x.shape[0] != batch_y.shape[0]:
        raise ShapeMismatch(f"x rows {batch_x.shape[0]} vs y rows {batch_y.shape[0]}")
    if alpha <= 0:
        raise GeotagError(f"mixup alpha must be > 0, got {alpha}")
    n = batch_x.shape[0]
    if per_sample:
        lam = rng.beta(alpha, alpha, size=n).astype(batch_x.dtype)[:, None]
    else:
        lam = batch_x.dtype.type(rng.beta(alpha, alpha))
    perm = rng.permutation(n)
    mixed_x = lam * batch_x + (1 - lam) * batch_x[perm]
    mixed_y = lam * batch_y + (1 - lam) * batch_y[perm]
    return mixed_x, mixed_y


def cosine_lr(epoch: int, lr_max: float, lr_min: float, t_max: int) -> float:
    """Half-cosine decay from lr_max (epoch 0) to lr_min (epoch t_max), then flat."""
    if t_max < 1:
        raise GeotagError(f"t_max must be >= 1, got {t_max}")
    t = min(max(epoch, 0), t_max)
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + np.cos(np.pi * t / t_max))


# ---------------------------------------------------------------------------
# optimizer

_ADAM_B1, _ADAM_B2, _ADAM_EPS = 0.9, 0.999, 1e-8


@dataclass
class OptimizerState:
    algo: str = "adam"
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_optimizer(head: Head, algo: str = "adam") -> OptimizerState:
    if algo not in ("adam", "sgd"):
        raise ConfigError(f"unknown optimizer {algo!r} (expected 'adam' or 'sgd')")
    state = OptimizerState(algo=algo)
    if algo == "adam":
        for name in head.param_names:
            p = getattr(head, name)
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
    return state


def optimizer_step(head: Head, grads: dict[str, np.ndarray],
                   state: OptimizerState, lr: float) -> tuple[Head, OptimizerState]:
    """Apply one update in place; Adam uses bias-corrected moments."""
    for name in head.param_names:
        if name not in grads:
            raise ShapeMismatch(f"missing gradient for parameter {name!r}")
        if grads[name].shape != getattr(head, name).shape:
            raise ShapeMismatch(
                f"gradient {name!r} shape {grads[name].shape} vs "
                f"parameter shape {getattr(head, name).shape}")

    if state.algo == "sgd":
        for name in head.param_names:
            p = getattr(head, name)
            p -= (lr * grads[name]).astype(p.dtype, copy=False)
        return head, state

    state.step += 1
    t = state.step
    for name in head.param_names:
        p = getattr(head, name)
        g = grads[name].astype(p.dtype, copy=False)
        m, v = state.m[name], state.v[name]
        m *= _ADAM_B1
        m += (1 - _ADAM_B1) * g
        v *= _ADAM_B2
        v += (1 - _ADAM_B2) * g * g
        m_hat = m / (1 - _ADAM_B1 ** t)
        v_hat = v / (1 - _ADAM_B2 ** t)
        p -= (lr * m_hat / (np.sqrt(v_hat) + _ADAM_EPS)).astype(p.dtype, copy=False)
    return head, state


# ---------------------------------------------------------------------------
# fit

@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_subset_acc: float
    val_macro_f1: float
    lr: float


@dataclass
class RunReport:
    history: list[EpochStats]
    best_epoch: int
    best_val_subset_acc: float
    best_val_macro_f1: float
    wall_seconds: float
    stopped_early: bool
    checkpoint_path: Optional[str] = None


def write_history_csv(report: RunReport, path) -> None:
    """Per-epoch metrics as CSV, with a summary comment line at the end."""
    lines = ["epoch,train_loss,val_subset_acc,val_macro_f1,lr"]
    for h in report.history:
        lines.append(f"{h.epoch},{h.train_loss:.9g},{h.val_subset_acc:.9g},"
                     f"{h.val_macro_f1:.9g},{h.lr:.9g}")
    lines.append(f"# best_epoch={report.best_epoch} "
                 f"best_val_subset_acc={report.best_val_subset_acc:.9g} "
                 f"best_val_macro_f1={report.best_val_macro_f1:.9g} "
                 f"stopped_early={str(report.stopped_early).lower()}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _eval_decisions(head: Head, x: np.ndarray) -> np.ndarray:
    decisions = np.empty((x.shape[0], head.n_out), dtype=np.uint8)
    for start in range(0, x.shape[0], _VAL_CHUNK):
        logits, _ = forward(head, x[start:start + _VAL_CHUNK], mode="eval")
        decisions[start:start + _VAL_CHUNK] = stable_sigmoid(logits) > 0.5
    return decisions


def _labels_matrix(dataset: Dataset, what: str) -> np.ndarray:
    rows = []
    for s in dataset.samples:
        if s.labels is None:
            raise GeotagError(f"{what} sample {s.id} has no labels")
        rows.append(s.labels)
    return np.stack(rows)


def fit(train_set: Dataset, val_set: Dataset, config: TrainConfig) -> tuple[Head, RunReport]:
    """Train a head on the fused features of train_set, early-stopping on
    val_set subset accuracy, and return the best checkpoint (not the last).

    Per epoch: seeded shuffle, batches of config.batch_size (last batch may
    be short), optional MixUp per batch, forward / loss / backward / step,
    then a full validation pass. Strict improvement of validation subset
    accuracy resets the patience counter; ties do not.
    """
    config.validate()
    if len(train_set) == 0:
        raise EmptyTrainSet("training set is empty")
    if len(val_set) == 0:
        raise EmptyDataset("validation set is empty")

    t_start = time.perf_counter()
    x_train = fuse_batch(train_set, config.combo)
    y_train = _labels_matrix(train_set, "train").astype(np.float32)
    x_val = fuse_batch(val_set, config.combo)
    y_val = _labels_matrix(val_set, "validation")
    n = x_train.shape[0]

    root = np.random.SeedSequence(config.seed)
    init_seq, shuffle_seq, dropout_seq, mixup_seq = root.spawn(4)
    head = init_head(config.head_kind, combo_dim(config.combo), init_seq,
                     n_out=y_train.shape[1])
    dropout_rng = np.random.default_rng(dropout_seq)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    mixup_rng = np.random.default_rng(mixup_seq)
    opt_state = init_optimizer(head, config.optimizer)

    history: list[EpochStats] = []
    best_head = head.copy()
    best_epoch = 0
    best_acc = -1.0
    best_f1 = 0.0
    epochs_since_best = 0
    stopped_early = False

    for epoch in range(1, config.max_epochs + 1):
        lr = float(cosine_lr(epoch - 1, config.lr_max, config.lr_min, config.t_max))
        perm = shuffle_rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            xb = x_train[idx]
            yb = y_train[idx]
            if config.mixup_enabled and xb.shape[0] >= 2:
                xb, yb = mixup(xb, yb, config.mixup_alpha, mixup_rng,
                               per_sample=config.mixup_per_sample)
            logits, cache = forward(head, xb, mode="train", rng=dropout_rng)
            loss, grad = bce_with_logits(logits, yb)
            grads = backward(head, cache, grad)
            optimizer_step(head, grads, opt_state, lr)
            loss_sum += loss * xb.shape[0]

        decisions = _eval_decisions(head, x_val)
        val_acc = subset_accuracy_from_decisions(decisions, y_val)
        per_class, _ = f1_from_decisions(decisions, y_val)
        val_f1 = float(per_class.mean())
        history.append(EpochStats(epoch, loss_sum / n, val_acc, val_f1, lr))

        if val_acc > best_acc:
            best_acc = val_acc
            best_f1 = val_f1
            best_epoch = epoch
            best_head = head.copy()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= config.patience:
                stopped_early = True
                break

    report = RunReport(history=history, best_epoch=best_epoch,
                       best_val_subset_acc=best_acc, best_val_macro_f1=best_f1,
                       wall_seconds=time.perf_counter() - t_start,
                       stopped_early=stopped_early)
    return best_head, report
