"""Run configuration and its flat key-value file format.

The config file mirrors TrainConfig fields exactly, one ``key = value`` per
line; '#' starts a comment. Unknown keys are errors, missing keys take the
defaults below.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .data_model import ModalityCombo
from .errors import ConfigError, GeotagError

# Root seed used when a command is run without an explicit --seed.
DEFAULT_SEED = 0


@dataclass
class TrainConfig:
    combo: ModalityCombo = ModalityCombo.ALL
    head_kind: str = "linear"
    mixup_enabled: bool = False
    mixup_alpha: float = 0.4
    mixup_per_sample: bool = False
    batch_size: int = 4096
    max_epochs: int = 200
    patience: int = 10
    t_max: int = 50
    lr_max: float = 1e-3
    lr_min: float = 0.0
    optimizer: str = "adam"
    val_fraction: float = 0.2
    seed: int = DEFAULT_SEED

    def validate(self) -> None:
        if self.head_kind not in ("linear", "mlp"):
            raise ConfigError(f"head_kind must be 'linear' or 'mlp', got {self.head_kind!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.t_max < 1:
            raise ConfigError(f"t_max must be >= 1, got {self.t_max}")
        if self.mixup_alpha <= 0:
            raise ConfigError(f"mixup_alpha must be > 0, got {self.mixup_alpha}")
        if not 0.0 <= self.lr_min <= self.lr_max or self.lr_max <= 0:
            raise ConfigError(
                f"need 0 <= lr_min <= lr_max and lr_max > 0, got "
                f"lr_min={self.lr_min}, lr_max={self.lr_max}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must fit in unsigned 64 bits, got {self.seed}")


_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


def _parse_value(name: str, text: str):
    ftype = _FIELDS[name].type
    text = text.strip()
    if ftype == "ModalityCombo":
        return ModalityCombo.from_string(text)
    if ftype == "bool":
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"key {name!r}: expected a boolean, got {text!r}")
    if ftype == "int":
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"key {name!r}: expected an integer, got {text!r}") from None
    if ftype == "float":
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"key {name!r}: expected a number, got {text!r}") from None
    return text


def parse_config_file(path) -> TrainConfig:
    """Read a flat key-value config file; unknown keys are errors."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise GeotagError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate config key {key!r}")
        values[key] = _parse_value(key, value)
    config = TrainConfig(**values)
    config.validate()
    return config


def write_config_file(config: TrainConfig, path) -> None:
    lines = []
    for f in dataclasses.fields(TrainConfig):
        value = getattr(config, f.name)
        if isinstance(value, ModalityCombo):
            value = value.value
        elif isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{f.name} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
