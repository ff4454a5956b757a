"""Experimental grid: 7 modality combos x 2 heads x MixUp on/off.

Each cell's seed is a pure function of (base seed, combo, head, mixup), so
any single cell re-run in isolation reproduces its value from the full
sweep exactly. Failed cells are recorded and do not abort the grid.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .data_model import Dataset, ModalityCombo
from .errors import GeotagError
from .train import TrainConfig, fit

HEAD_KINDS = ("linear", "mlp")

GridKey = tuple[ModalityCombo, str, bool]  # (combo, head_kind, mixup)


def full_grid() -> list[GridKey]:
    return [(combo, head, mixup)
            for mixup in (False, True)
            for combo in ModalityCombo
            for head in HEAD_KINDS]


def cell_seed(base_seed: int, combo: ModalityCombo, head_kind: str, mixup: bool) -> int:
    """Deterministic per-cell seed derived from the base seed and cell key."""
    combos = tuple(ModalityCombo)
    seq = np.random.SeedSequence([base_seed, combos.index(combo),
                                  HEAD_KINDS.index(head_kind), int(mixup)])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


@dataclass
class SweepCell:
    combo: ModalityCombo
    head_kind: str
    mixup: bool
    best_val_subset_acc: Optional[float] = None
    best_val_macro_f1: Optional[float] = None
    best_epoch: Optional[int] = None
    seconds: Optional[float] = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def run_sweep(train_set: Dataset, val_set: Dataset, base_config: TrainConfig,
              grid_selector: Optional[Iterable[GridKey]] = None,
              max_workers: int = 1) -> list[SweepCell]:
    """Run fit() per grid cell, varying only (combo, head_kind, mixup).

    grid_selector, when given, restricts the grid to those keys (order
    preserved). Cells run sequentially unless max_workers > 1.
    """
    grid = list(grid_selector) if grid_selector is not None else full_grid()
    if not grid:
        raise GeotagError("empty sweep grid")

    def run_cell(key: GridKey) -> SweepCell:
        combo, head_kind, mixup = key
        config = dataclasses.replace(
            base_config, combo=combo, head_kind=head_kind, mixup_enabled=mixup,
            seed=cell_seed(base_config.seed, combo, head_kind, mixup))
        cell = SweepCell(combo=combo, head_kind=head_kind, mixup=mixup)
        try:
            _, report = fit(train_set, val_set, config)
        except GeotagError as exc:
            cell.error = str(exc)
            return cell
        cell.best_val_subset_acc = report.best_val_subset_acc
        cell.best_val_macro_f1 = report.best_val_macro_f1
        cell.best_epoch = report.best_epoch
        cell.seconds = report.wall_seconds
        return cell

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(run_cell, grid))
    return [run_cell(key) for key in grid]


def sweep_to_csv(cells: list[SweepCell]) -> str:
    """Machine-readable results; failed cells carry NA metrics."""
    lines = ["combo,mixup,head,best_val_subset_acc,best_val_macro_f1,best_epoch,seconds"]
    for c in cells:
        if c.failed:
            lines.append(f"{c.combo.value},{str(c.mixup).lower()},{c.head_kind},NA,NA,NA,NA")
        else:
            lines.append(f"{c.combo.value},{str(c.mixup).lower()},{c.head_kind},"
                         f"{c.best_val_subset_acc:.6f},{c.best_val_macro_f1:.6f},"
                         f"{c.best_epoch},{c.seconds:.3f}")
    return "\n".join(lines) + "\n"


def render_table(cells: list[SweepCell]) -> str:
    """Aligned-text table, one row per (combo, mixup), head columns per
    metric; the best cell of each metric column group is starred.
    """
    by_key = {(c.combo, c.head_kind, c.mixup): c for c in cells}
    row_keys = []
    for mixup in (False, True):
        for combo in ModalityCombo:
            if any(k[0] == combo and k[2] == mixup for k in by_key):
                row_keys.append((combo, mixup))

    def metric(cell: Optional[SweepCell], name: str) -> Optional[float]:
        if cell is None or cell.failed:
            return None
        return getattr(cell, name)

    groups = [("val F1", "best_val_macro_f1"), ("val acc", "best_val_subset_acc")]
    best: dict[str, float] = {}
    for _, attr in groups:
        values = [metric(by_key.get((combo, head, mixup)), attr)
                  for combo, mixup in row_keys for head in HEAD_KINDS]
        values = [v for v in values if v is not None]
        if values:
            best[attr] = max(values)

    def fmt(cell: Optional[SweepCell], attr: str) -> str:
        v = metric(cell, attr)
        if v is None:
            return "failed" if cell is not None and cell.failed else "--"
        text = f"{v:.3f}"
        return f"*{text}*" if attr in best and v == best[attr] else f" {text} "

    header = (f"{'modality':<16} {'mixup':<6}"
              + "".join(f" {g + ' ' + h:>16}" for g, _ in groups for h in HEAD_KINDS))
    lines = [header, "-" * len(header)]
    for combo, mixup in row_keys:
        row = f"{combo.value:<16} {('yes' if mixup else 'no'):<6}"
        for _, attr in groups:
            for head in HEAD_KINDS:
                row += f" {fmt(by_key.get((combo, head, mixup)), attr):>16}"
        lines.append(row)
    return "\n".join(lines) + "\n"
