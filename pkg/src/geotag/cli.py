"""Command-line entry point tying ingestion, training, evaluation, and the
sweep harness together.

Exit codes: 0 success, 1 usage error, 2 data error (any GeotagError),
3 internal invariant violation or unexpected failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import evaluate as ev
from . import ingest, sweep as sweep_mod
from .data_model import builtin_vocabulary
from .errors import ComboMismatch, GeotagError
from .heads import load_checkpoint, save_checkpoint
from .train import fit, write_history_csv
from .train_config import DEFAULT_SEED, TrainConfig, parse_config_file

USAGE_ERROR, DATA_ERROR, INTERNAL_ERROR = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="geotag",
                     description="Multimodal multi-label landscape tagging toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", help="join metadata, labels and embeddings into a dataset dir")
    p.add_argument("--metadata", required=True, help="metadata CSV (image_id,title,grid_reference,tags)")
    p.add_argument("--labels", default=None, help="optional label CSV (image_id,label_bits)")
    p.add_argument("--img-emb", required=True, help="image embeddings (GEOEMB, dim 512)")
    p.add_argument("--txt-emb", required=True, help="title embeddings (GEOEMB, dim 512)")
    p.add_argument("--out", required=True, help="output dataset directory")

    p = sub.add_parser("train", help="train a head on a packaged dataset")
    p.add_argument("--dataset", required=True, help="packaged dataset directory")
    p.add_argument("--config", required=True, help="flat key-value config file")
    p.add_argument("--out", required=True, help="checkpoint file to write")
    p.add_argument("--history", default=None, help="history CSV (default: <out>.history.csv)")

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a labeled dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="metric report CSV")

    p = sub.add_parser("predict", help="write a submission CSV from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="submission CSV")

    p = sub.add_parser("sweep", help="run the modality x head x mixup grid")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory for sweep.csv and sweep.txt")
    p.add_argument("--workers", type=int, default=1, help="parallel cells (default sequential)")

    p = sub.add_parser("synth", help="generate a packaged synthetic dataset")
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--noise", type=float, default=0.0, help="label flip probability")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True, help="output dataset directory")

    p = sub.add_parser("stats", help="print dataset statistics")
    p.add_argument("--dataset", required=True)
    return parser


def _split_from_config(dataset, config: TrainConfig):
    # Deterministic split seed derived from the run seed, separate from the
    # training streams.
    split_seed = int(np.random.SeedSequence([config.seed, 0x5eed]).generate_state(1)[0])
    return ingest.split_train_val(dataset, config.val_fraction, split_seed)


def _cmd_prepare(args) -> int:
    metadata = ingest.parse_metadata_csv(args.metadata)
    labels = ingest.parse_label_csv(args.labels) if args.labels else None
    img = ingest.load_embeddings(args.img_emb, expected_dim=512)
    txt = ingest.load_embeddings(args.txt_emb, expected_dim=512)
    dataset, summary = ingest.build_dataset(metadata, img, txt, labels)
    ingest.save_dataset(dataset, args.out)
    print(f"packaged {summary['kept']}/{summary['total']} samples into {args.out}")
    for key in ("missing_image_emb", "missing_text_emb", "missing_labels", "label_conflicts"):
        if summary[key]:
            print(f"  {key}: {summary[key]}")
    return 0


def _cmd_train(args) -> int:
    config = parse_config_file(args.config)
    dataset = ingest.load_dataset(args.dataset)
    train_set, val_set = _split_from_config(dataset, config)
    head, report = fit(train_set, val_set, config)
    save_checkpoint(head, args.out, config.combo, seed=config.seed, epoch=report.best_epoch)
    report.checkpoint_path = str(args.out)
    history_path = args.history or f"{args.out}.history.csv"
    write_history_csv(report, history_path)
    print(f"best epoch {report.best_epoch}: "
          f"val subset accuracy {report.best_val_subset_acc:.4f}, "
          f"val macro F1 {report.best_val_macro_f1:.4f} "
          f"({report.wall_seconds:.1f}s, "
          f"{'early stop' if report.stopped_early else 'max epochs'})")
    print(f"checkpoint: {args.out}\nhistory: {history_path}")
    return 0


def _load_for_inference(checkpoint_path, dataset_path):
    head, meta = load_checkpoint(checkpoint_path)
    dataset = ingest.load_dataset(dataset_path)
    combo = meta["combo"]
    missing = [name for name, used, have in (
        ("image", combo.uses_image, all(s.image_emb is not None for s in dataset)),
        ("title", combo.uses_title, all(s.text_emb is not None for s in dataset)),
        ("location", combo.uses_location, all(s.loc is not None for s in dataset)),
    ) if used and not have]
    if missing:
        raise ComboMismatch(
            f"checkpoint combo {combo.value!r} needs modalities the dataset lacks: {missing}")
    return head, combo, dataset


def _cmd_evaluate(args) -> int:
    head, combo, dataset = _load_for_inference(args.checkpoint, args.dataset)
    if not dataset.labeled:
        raise GeotagError("evaluate requires a labeled dataset")
    pred = ev.predict(head, dataset, combo)
    report = ev.f1_scores(pred, dataset)
    ev.write_metric_report(report, builtin_vocabulary(), args.out)
    print(f"subset accuracy {report.subset_accuracy:.4f}, macro F1 {report.macro_f1:.4f}")
    print(f"report: {args.out}")
    return 0


def _cmd_predict(args) -> int:
    head, combo, dataset = _load_for_inference(args.checkpoint, args.dataset)
    pred = ev.enforce_min_one_tag(ev.predict(head, dataset, combo))
    ev.write_submission(pred, args.out)
    print(f"wrote {len(pred.ids)} rows to {args.out}")
    if dataset.labeled:
        print(f"subset accuracy (after min-one-tag): {ev.subset_accuracy(pred, dataset):.4f}")
    return 0


def _cmd_sweep(args) -> int:
    config = parse_config_file(args.config)
    dataset = ingest.load_dataset(args.dataset)
    train_set, val_set = _split_from_config(dataset, config)
    cells = sweep_mod.run_sweep(train_set, val_set, config, max_workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(sweep_mod.sweep_to_csv(cells), encoding="utf-8")
    table = sweep_mod.render_table(cells)
    (out / "sweep.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    failed = [c for c in cells if c.failed]
    if failed:
        print(f"{len(failed)} cells failed; see sweep.csv")
    return 0


def _cmd_synth(args) -> int:
    dataset, _ = ingest.synth_dataset(args.n, noise_level=args.noise, seed=args.seed)
    ingest.save_dataset(dataset, args.out)
    print(f"wrote synthetic dataset of {len(dataset)} samples to {args.out}")
    return 0


def _cmd_stats(args) -> int:
    dataset = ingest.load_dataset(args.dataset)
    print(ev.dataset_stats(dataset), end="")
    return 0


_COMMANDS = {"prepare": _cmd_prepare, "train": _cmd_train, "evaluate": _cmd_evaluate,
             "predict": _cmd_predict, "sweep": _cmd_sweep, "synth": _cmd_synth,
             "stats": _cmd_stats}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except GeotagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except Exception as exc:  # invariant violations and bugs
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return INTERNAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
