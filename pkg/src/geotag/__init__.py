"""Multimodal, multi-label tagging of landscape photos.

Fuses frozen image embeddings, title embeddings and normalized grid-derived
location features, trains linear or MLP heads with optional MixUp and a
cosine-annealed learning rate, and evaluates with strict subset accuracy and
macro-F1.
"""

from .data_model import (Dataset, ModalityCombo, Sample, TagVocabulary,
                         builtin_vocabulary, combo_dim)
from .evaluate import (MetricReport, PredictionSet, dataset_stats,
                       enforce_min_one_tag, f1_scores, predict,
                       subset_accuracy, write_submission)
from .fusion import fuse, fuse_batch
from .gridref import (GridRef, format_gridref, gridref_to_latlon,
                      normalize_location, parse_gridref)
from .heads import (LinearHead, MlpHead, backward, forward, init_head,
                    load_checkpoint, save_checkpoint)
from .ingest import (load_dataset, load_embeddings, parse_label_csv,
                     parse_metadata_csv, save_dataset, split_train_val,
                     synth_dataset, write_embeddings)
from .sweep import run_sweep
from .train import (RunReport, TrainConfig, bce_with_logits, cosine_lr, fit,
                    mixup, optimizer_step)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "ModalityCombo", "Sample", "TagVocabulary",
    "builtin_vocabulary", "combo_dim",
    "MetricReport", "PredictionSet", "dataset_stats", "enforce_min_one_tag",
    "f1_scores", "predict", "subset_accuracy", "write_submission",
    "fuse", "fuse_batch",
    "GridRef", "format_gridref", "gridref_to_latlon", "normalize_location",
    "parse_gridref",
    "LinearHead", "MlpHead", "backward", "forward", "init_head",
    "load_checkpoint", "save_checkpoint",
    "load_dataset", "load_embeddings", "parse_label_csv", "parse_metadata_csv",
    "save_dataset", "split_train_val", "synth_dataset", "write_embeddings",
    "run_sweep",
    "RunReport", "TrainConfig", "bce_with_logits", "cosine_lr", "fit", "mixup",
    "optimizer_step",
]
