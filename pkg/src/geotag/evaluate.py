"""Prediction thresholding, subset accuracy, macro/per-class F1, submission
post-processing, and the report/submission file writers.

Decisions use a strict threshold: a tag is predicted iff its probability
exceeds 0.5, so an uninformative logit of exactly 0 maps to "no tag". Raw
decision vectors may be all-zero; enforce_min_one_tag() is the submission
step that guarantees at least one tag per row.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from .data_model import Dataset, ModalityCombo, TagVocabulary
from .errors import (EmptyDataset, EmptyPredictionRow, GeotagError, IdMismatch,
                     MalformedRow)
from .fusion import fuse_batch
from .heads import Head, forward


@dataclass(frozen=True, eq=False)
class PredictionSet:
    ids: np.ndarray            # (N,) uint64
    probabilities: np.ndarray  # (N, C) float64 in [0, 1]
    decisions: np.ndarray      # (N, C) uint8

    def __post_init__(self):
        if not (len(self.ids) == len(self.probabilities) == len(self.decisions)):
            raise GeotagError("prediction arrays must share their first dimension")


@dataclass(frozen=True, eq=False)
class MetricReport:
    subset_accuracy: float
    macro_f1: float
    per_class_f1: np.ndarray  # (C,) float64
    support: np.ndarray       # (C,) int64 positive count per class in the truth


_PREDICT_CHUNK = 65536


def predict(head: Head, samples, combo: ModalityCombo) -> PredictionSet:
    """Eval-mode probabilities and strict-threshold decisions per sample."""
    from .train import stable_sigmoid  # local import; train depends on this module

    if isinstance(samples, Dataset):
        ids = np.array(samples.ids(), dtype=np.uint64)
        samples = samples.samples
    else:
        ids = np.array([s.id for s in samples], dtype=np.uint64)
    x = fuse_batch(samples, combo)
    probs = np.empty((x.shape[0], head.n_out), dtype=np.float64)
    for start in range(0, x.shape[0], _PREDICT_CHUNK):
        logits, _ = forward(head, x[start:start + _PREDICT_CHUNK], mode="eval")
        probs[start:start + _PREDICT_CHUNK] = stable_sigmoid(logits)
    return PredictionSet(ids=ids, probabilities=probs,
                         decisions=(probs > 0.5).astype(np.uint8))


def enforce_min_one_tag(pred: PredictionSet) -> PredictionSet:
    """Give every empty row its single highest-probability tag.

    Ties break to the lowest index; rows that already have a tag are left
    untouched, so the operation is idempotent.
    """
    decisions = pred.decisions.copy()
    empty = decisions.sum(axis=1) == 0
    if empty.any():
        top = np.argmax(pred.probabilities[empty], axis=1)
        decisions[np.flatnonzero(empty), top] = 1
    return PredictionSet(ids=pred.ids, probabilities=pred.probabilities,
                         decisions=decisions)


# ---------------------------------------------------------------------------
# metrics

Truth = Union[Dataset, Mapping[int, np.ndarray]]


def _truth_matrix(pred: PredictionSet, truth: Truth) -> np.ndarray:
    if isinstance(truth, Dataset):
        mapping = {}
        for s in truth.samples:
            if s.labels is None:
                raise GeotagError(f"truth sample {s.id} has no labels")
            mapping[s.id] = s.labels
    else:
        mapping = truth
    pred_ids = [int(i) for i in pred.ids]
    if set(pred_ids) != set(int(k) for k in mapping.keys()):
        raise IdMismatch("prediction and truth ids differ")
    return np.stack([np.asarray(mapping[i]) for i in pred_ids])


def subset_accuracy_from_decisions(decisions: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of rows whose full decision vector matches the truth exactly."""
    if decisions.shape != truth.shape:
        raise IdMismatch(f"decision shape {decisions.shape} vs truth {truth.shape}")
    return float(np.mean(np.all(decisions == truth, axis=1)))


def f1_from_decisions(decisions: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-class F1 (0/0 defined as 0) and per-class support counts."""
    if decisions.shape != truth.shape:
        raise IdMismatch(f"decision shape {decisions.shape} vs truth {truth.shape}")
    d = decisions.astype(np.int64)
    t = truth.astype(np.int64)
    tp = np.sum((d == 1) & (t == 1), axis=0)
    fp = np.sum((d == 1) & (t == 0), axis=0)
    fn = np.sum((d == 0) & (t == 1), axis=0)
    denom = 2 * tp + fp + fn
    f1 = np.divide(2.0 * tp, denom, out=np.zeros(len(denom), dtype=np.float64),
                   where=denom > 0)
    return f1, t.sum(axis=0)


def subset_accuracy(pred: PredictionSet, truth: Truth) -> float:
    return subset_accuracy_from_decisions(pred.decisions, _truth_matrix(pred, truth))


def f1_scores(pred: PredictionSet, truth: Truth) -> MetricReport:
    """Per-class and macro F1 plus subset accuracy against aligned truth.

    Macro F1 is the unweighted mean over all classes, zero-support classes
    included (with the 0/0 -> 0 convention).
    """
    matrix = _truth_matrix(pred, truth)
    per_class, support = f1_from_decisions(pred.decisions, matrix)
    return MetricReport(
        subset_accuracy=subset_accuracy_from_decisions(pred.decisions, matrix),
        macro_f1=float(per_class.mean()),
        per_class_f1=per_class,
        support=support)


# ---------------------------------------------------------------------------
# file writers

def write_submission(pred: PredictionSet, path) -> None:
    """CSV ``image_id,tags`` with space-separated ascending tag indices.

    Rows are sorted by id. The min-one-tag guarantee must already hold;
    any empty row is an error rather than silently written.
    """
    order = np.argsort(pred.ids, kind="stable")
    rows = []
    for i in order:
        indices = np.flatnonzero(pred.decisions[i])
        if len(indices) == 0:
            raise EmptyPredictionRow(
                f"image_id {int(pred.ids[i])} has no tags; run enforce_min_one_tag first")
        rows.append((int(pred.ids[i]), " ".join(str(j) for j in indices)))
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["image_id", "tags"])
        writer.writerows(rows)


def parse_submission(path) -> dict[int, list[int]]:
    """Read a submission CSV back into id -> sorted tag index list."""
    out: dict[int, list[int]] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["image_id", "tags"]:
            raise MalformedRow(1, f"bad header {header!r}, expected ['image_id', 'tags']")
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise MalformedRow(reader.line_num, f"expected 2 fields, got {len(row)}")
            out[int(row[0])] = [int(tok) for tok in row[1].split()]
    return out


def write_metric_report(report: MetricReport, vocabulary: TagVocabulary, path) -> None:
    """Per-class CSV (index,name,f1,support) with summary comment lines."""
    lines = ["index,name,f1,support"]
    for i, f1 in enumerate(report.per_class_f1):
        name = vocabulary.name_of(i)
        quoted = '"' + name.replace('"', '""') + '"'
        lines.append(f"{i},{quoted},{f1:.9g},{int(report.support[i])}")
    lines.append(f"# subset_accuracy={report.subset_accuracy:.9g}")
    lines.append(f"# macro_f1={report.macro_f1:.9g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# dataset statistics

def dataset_stats(dataset: Dataset) -> str:
    """Plain-text report: tag-count histogram, per-tag frequencies, and
    title-length summary (the numeric substrate of the usual dataset plots).
    """
    if len(dataset) == 0:
        raise EmptyDataset("no samples to report on")
    if not dataset.labeled:
        raise GeotagError("dataset_stats requires a labeled dataset")

    labels = np.stack([s.labels for s in dataset.samples])
    per_sample = labels.sum(axis=1)
    per_tag = labels.sum(axis=0)

    lines = [f"samples: {len(dataset)}", "",
             "tags_per_image,count"]
    for k in range(int(per_sample.min()), int(per_sample.max()) + 1):
        lines.append(f"{k},{int(np.sum(per_sample == k))}")

    lines += ["", "tag_index,tag_name,count"]
    for i, count in enumerate(per_tag):
        lines.append(f'{i},"{dataset.vocabulary.name_of(i)}",{int(count)}')

    title_lengths = [len(s.title) for s in dataset.samples if s.title is not None]
    lines.append("")
    if title_lengths:
        arr = np.array(title_lengths, dtype=np.float64)
        lines.append(f"titles: {len(arr)} present, mean_len={arr.mean():.2f}, "
                     f"min={int(arr.min())}, median={float(np.median(arr)):.1f}, "
                     f"max={int(arr.max())}")
    else:
        lines.append("titles: none present")
    return "\n".join(lines) + "\n"
