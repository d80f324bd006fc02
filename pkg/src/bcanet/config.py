"""Hyperparameters and the flat ``section.key = value`` config format.

Lines are ``section.key = value``; ``#`` starts a comment; blank lines are
ignored. Floats are written with ``repr`` so dump -> parse -> dump is exact.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields

MODEL_KINDS = ("bcanet", "nonlocal", "fcn")


class ConfigError(ValueError):
    pass


@dataclass
class SceneConfig:
    image_size: int = 64
    num_classes: int = 4
    shapes_min: int = 2
    shapes_max: int = 4
    ambiguity_prob: float = 0.5
    noise_std: float = 0.05
    boundary_radius: int = 2
    seed: int = 0

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ConfigError(f"scene.num_classes must be >= 2, got {self.num_classes}")
        if self.num_classes > 8:
            raise ConfigError(f"scene.num_classes must be <= 8 (palette size), got {self.num_classes}")
        if self.image_size < 16 or self.image_size % 8:
            raise ConfigError(f"scene.image_size must be a multiple of 8 and >= 16, got {self.image_size}")
        if not 0 <= self.shapes_min <= self.shapes_max:
            raise ConfigError("scene.shapes_min/shapes_max must satisfy 0 <= min <= max")
        if not 0.0 <= self.ambiguity_prob <= 1.0:
            raise ConfigError("scene.ambiguity_prob must lie in [0, 1]")
        if self.noise_std < 0:
            raise ConfigError("scene.noise_std must be >= 0")
        if self.boundary_radius < 1:
            raise ConfigError("scene.boundary_radius must be >= 1")


@dataclass
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 20.0
    lambda3: float = 1.0
    lambda4: float = 0.4
    att_threshold: float = 0.8
    boundary_reduction: str = "mean"

    def validate(self) -> None:
        for name in ("lambda1", "lambda2", "lambda3", "lambda4"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss.{name} must be nonnegative")
        if not 0.0 < self.att_threshold < 1.0:
            raise ConfigError("loss.att_threshold must lie in (0, 1)")
        if self.boundary_reduction not in ("mean", "sum"):
            raise ConfigError("loss.boundary_reduction must be 'mean' or 'sum'")


@dataclass
class ModelConfig:
    widths: tuple[int, ...] = (16, 32, 64, 64)
    unify_channels: int = 16
    attn_channels: int = 16
    head_channels: int = 32
    aux_stage: int = 3

    def validate(self) -> None:
        if len(self.widths) != 4 or min(self.widths) < 1:
            raise ConfigError("model.widths must be four positive integers")
        for name in ("unify_channels", "attn_channels", "head_channels"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be >= 1")
        if self.aux_stage not in (1, 2, 3, 4):
            raise ConfigError("model.aux_stage must be in 1..4")


@dataclass
class TrainConfig:
    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0005
    power: float = 0.9
    epochs: int = 40
    batch_size: int = 8
    n_train: int = 500
    n_val: int = 100
    max_iter: int = -1  # -1: epochs * batches per epoch
    ignore_label: int = 255
    seed: int = 0

    def validate(self) -> None:
        if self.lr0 < 0 or self.weight_decay < 0 or not 0 <= self.momentum < 1:
            raise ConfigError("train.lr0/weight_decay must be >= 0 and momentum in [0, 1)")
        if self.power <= 0:
            raise ConfigError("train.power must be > 0")
        if self.epochs < 0 or self.batch_size < 1 or self.n_train < 1 or self.n_val < 0:
            raise ConfigError("train.epochs/batch_size/n_train/n_val out of range")
        if self.max_iter < -1:
            raise ConfigError("train.max_iter must be -1 (auto) or >= 0")

    @property
    def steps_per_epoch(self) -> int:
        return -(-self.n_train // self.batch_size)

    @property
    def total_iters(self) -> int:
        return self.epochs * self.steps_per_epoch if self.max_iter < 0 else self.max_iter


@dataclass
class MetricConfig:
    boundary_threshold: float = 0.0003
    num_classes: int = 4
    ignore_label: int = 255

    def validate(self) -> None:
        if self.boundary_threshold <= 0:
            raise ConfigError("metric.boundary_threshold must be > 0")


@dataclass
class MetricSection:
    boundary_threshold: float = 0.0003


@dataclass
class Config:
    train: TrainConfig = field(default_factory=TrainConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=ModelConfig)
    metric: MetricSection = field(default_factory=MetricSection)

    def validate(self) -> Config:
        for section in (self.train, self.scene, self.loss, self.model):
            section.validate()
        self.metric_config().validate()
        return self

    def metric_config(self) -> MetricConfig:
        return MetricConfig(self.metric.boundary_threshold, self.scene.num_classes, self.train.ignore_label)

    def with_seed(self, seed: int) -> Config:
        return dataclasses.replace(
            self,
            train=dataclasses.replace(self.train, seed=seed),
            scene=dataclasses.replace(self.scene, seed=seed),
        )


SECTIONS = ("train", "scene", "loss", "model", "metric")


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse_value(raw: str, current, key: str):
    try:
        if isinstance(current, bool):
            if raw not in ("true", "false"):
                raise ValueError(raw)
            return raw == "true"
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            return tuple(int(v) for v in raw.split(","))
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def dump_config(cfg: Config) -> str:
    lines = []
    for section in SECTIONS:
        obj = getattr(cfg, section)
        for f in fields(obj):
            lines.append(f"{section}.{f.name} = {_format(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"


def parse_config(text: str, base: Config | None = None) -> Config:
    cfg = dataclasses.replace(base) if base is not None else Config()
    sections = {s: dataclasses.replace(getattr(cfg, s)) for s in SECTIONS}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        section, _, name = key.partition(".")
        if section not in sections or not name or not hasattr(sections[section], name):
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        current = getattr(sections[section], name)
        setattr(sections[section], name, _parse_value(raw, current, key))
    cfg = Config(**sections)
    return cfg.validate()


def load_config(path: str | os.PathLike | None) -> Config:
    cfg = Config() if path is None else parse_config(open(path, encoding="utf-8").read())
    seed = os.environ.get("BCANET_SEED")
    if seed is not None:
        try:
            cfg = cfg.with_seed(int(seed))
        except ValueError as exc:
            raise ConfigError(f"BCANET_SEED must be an integer, got {seed!r}") from exc
    return cfg.validate()
