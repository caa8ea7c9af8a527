"""Plain-text `key = value` run configuration."""

from dataclasses import dataclass, fields
from typing import Optional

from .errors import ConfigError


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _tau(s: str) -> Optional[float]:
    if s.lower() == "auto":
        return None
    return float(s)


@dataclass
class TrainConfig:
    stage: int = 1
    split: str = "s3"
    alpha: float = 0.3
    tau: Optional[float] = None        # None: resolve to H+W of the selection layer
    rank: bool = True
    reg: bool = True
    transform: bool = True
    concat: bool = True
    lr: float = 0.003           # stable without batch statistics; 0.01 diverges here
    momentum: float = 0.9
    epochs: int = 30
    seed: int = 0
    classes: int = 4
    clip_len: int = 8
    height: int = 32
    width: int = 32
    batch: int = 16
    train_count: int = 2000
    val_count: int = 500
    noise: float = 0.05
    side: int = 12
    speed: int = 2
    shift: float = 0.125
    q_shift: bool = False
    keep_coords: bool = False
    sum_axis: str = "width"
    freeze_front: bool = False
    stop_acc: float = 0.0              # 0 disables early stopping
    min_epochs: int = 2
    init: str = ""                     # stage-1 checkpoint; "" means <out>/stage1.akck

    def validate(self) -> "TrainConfig":
        if self.stage not in (1, 2):
            raise ConfigError(f"stage must be 1 or 2, got {self.stage}")
        if self.split not in ("s2", "s3", "s4"):
            raise ConfigError(f"split must be s2, s3, or s4, got {self.split!r}")
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.tau is not None and self.tau <= 1:
            raise ConfigError(f"tau must exceed 1 (or 'auto'), got {self.tau}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not 2 <= self.classes <= 8:
            raise ConfigError(f"classes must be in [2, 8], got {self.classes}")
        if self.clip_len < 2:
            raise ConfigError(f"clip_len must be >= 2, got {self.clip_len}")
        if self.height < 8 or self.width < 8:
            raise ConfigError(f"frames must be at least 8x8, got {self.height}x{self.width}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        if self.train_count < 1 or self.val_count < 1:
            raise ConfigError("train_count and val_count must be >= 1")
        if self.noise < 0:
            raise ConfigError(f"noise must be >= 0, got {self.noise}")
        if self.side < 1:
            raise ConfigError(f"side must be >= 1, got {self.side}")
        if self.speed < 0:
            raise ConfigError(f"speed must be >= 0, got {self.speed}")
        travel = self.side + self.speed * (self.clip_len - 1)
        if travel > min(self.height, self.width):
            raise ConfigError(
                f"object of side {self.side} moving {self.speed} px/frame for "
                f"{self.clip_len} frames does not fit in {self.height}x{self.width}")
        if not 0 <= self.shift <= 0.5:
            raise ConfigError(f"shift fraction must be in [0, 0.5], got {self.shift}")
        if self.sum_axis not in ("width", "height"):
            raise ConfigError(f"sum_axis must be width or height, got {self.sum_axis!r}")
        if not 0 <= self.stop_acc <= 1:
            raise ConfigError(f"stop_acc must be in [0, 1], got {self.stop_acc}")
        if self.min_epochs < 1:
            raise ConfigError(f"min_epochs must be >= 1, got {self.min_epochs}")
        return self


_PARSERS = {
    "stage": int, "split": str, "alpha": float, "tau": _tau,
    "rank": _bool, "reg": _bool, "transform": _bool, "concat": _bool,
    "lr": float, "momentum": float, "epochs": int, "seed": int,
    "classes": int, "clip_len": int, "height": int, "width": int, "batch": int,
    "train_count": int, "val_count": int, "noise": float, "side": int,
    "speed": int, "shift": float, "q_shift": _bool, "keep_coords": _bool,
    "sum_axis": str, "freeze_front": _bool, "stop_acc": float,
    "min_epochs": int, "init": str,
}

assert set(_PARSERS) == {f.name for f in fields(TrainConfig)}


def parse_config(text: str) -> TrainConfig:
    cfg = TrainConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, _, value = body.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        try:
            setattr(cfg, key, _PARSERS[key](value))
        except ValueError as e:
            raise ConfigError(f"line {lineno}: bad value for {key}: {e}") from None
    return cfg.validate()


def load_config(path: str) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())
