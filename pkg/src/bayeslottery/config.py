"""Experiment configuration as flat ``key = value`` text."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .models import ModelConfig
from .optimizer import TrainConfig


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


@dataclass
class ExperimentConfig:
    # model
    arch: str = "mlp"
    widths: tuple[int, ...] = (2, 64, 64, 4)
    blocks: tuple[int, ...] = (1, 1)
    num_classes: int = 4
    in_channels: int = 3
    bayesian: bool = True
    init_dist: str = "uniform"
    # pruning
    score: str = "snr"
    rate: float = 0.2
    levels: int = 20
    rewind_rho: bool = True
    # training
    epochs: int = 160
    lr: float = 1e-3
    milestones: tuple[int, ...] = (80, 120)
    gamma: float = 0.1
    warmup_epochs: int = 0
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 128
    samples: int = 10
    eval_samples: int = 10
    temperature: float = 0.1
    prior_mu: float = 0.0
    prior_sigma: float = 1.0
    bins: int = 10
    augment: bool = False
    # data
    dataset: str = "blobs"
    n_train: int = 250  # per class for synthetic sets
    n_test: int = 250
    spread: float = 0.15
    grid: int = 5
    noise: float = 0.1
    image_size: int = 8
    cifar_train: str = ""
    cifar_test: str = ""
    cifar_limit: int = 0
    data_seed: int = 11
    # run
    seed: int = 0
    out: str = "runs"

    def model_config(self, bayesian: bool | None = None) -> ModelConfig:
        return ModelConfig(arch=self.arch, widths=tuple(self.widths), blocks=tuple(self.blocks),
                           num_classes=self.num_classes, in_channels=self.in_channels,
                           bayesian=self.bayesian if bayesian is None else bayesian,
                           init_dist=self.init_dist)

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, lr=self.lr, milestones=tuple(self.milestones),
                           gamma=self.gamma, warmup_epochs=self.warmup_epochs,
                           weight_decay=self.weight_decay, betas=(self.beta1, self.beta2),
                           eps=self.adam_eps, batch_size=self.batch_size, samples=self.samples,
                           eval_samples=self.eval_samples, temperature=self.temperature,
                           prior_mu=self.prior_mu, prior_sigma=self.prior_sigma,
                           bins=self.bins, augment=self.augment)

    def validate(self) -> None:
        checks = [
            ("arch", self.arch in ("mlp", "mini_resnet"), "must be mlp or mini_resnet"),
            ("score", self.score in ("magnitude", "snr", "square", "mu_magnitude", "mu"),
             "must be magnitude, snr, square or mu"),
            ("rate", 0 < self.rate < 1, "must lie in (0, 1)"),
            ("levels", self.levels >= 0, "must be >= 0"),
            ("epochs", self.epochs >= 1, "must be >= 1"),
            ("samples", self.samples >= 1, "must be >= 1"),
            ("eval_samples", self.eval_samples >= 1, "must be >= 1"),
            ("batch_size", self.batch_size >= 1, "must be >= 1"),
            ("bins", self.bins >= 1, "must be >= 1"),
            ("prior_sigma", self.prior_sigma > 0, "must be positive"),
            ("dataset", self.dataset in ("blobs", "moons", "images", "cifar10"),
             "must be blobs, moons, images or cifar10"),
            ("init_dist", self.init_dist in ("uniform", "normal"), "must be uniform or normal"),
            ("widths", len(self.widths) > 0 and min(self.widths) >= 1,
             "widths must be positive"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(key, f"{msg} (got {getattr(self, key)!r})")
        try:
            self.model_config().validate()
        except ValueError as exc:
            raise ConfigError("widths", str(exc)) from None


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _parse_value(key: str, raw: str):
    default = getattr(ExperimentConfig(), key)
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            parts = [p for p in raw.replace(",", " ").split() if p]
            return tuple(int(p) for p in parts)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r} as {type(default).__name__}") from None


def update(cfg: ExperimentConfig, items: dict[str, str]) -> ExperimentConfig:
    """New config with string-valued overrides applied; unknown keys are rejected."""
    changes = {}
    for key, raw in items.items():
        if key not in _FIELDS:
            raise ConfigError(key, "unknown key")
        changes[key] = raw if not isinstance(raw, str) else _parse_value(key, raw)
    return dataclasses.replace(cfg, **changes)


def parse_config(text: str) -> ExperimentConfig:
    items = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, f"line {lineno} is not 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        items[key] = value
    return update(ExperimentConfig(), items)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{f.name} = {_format(getattr(cfg, f.name))}\n" for f in fields(cfg))
