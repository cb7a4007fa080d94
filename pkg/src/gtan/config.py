"""Run configuration: a flat JSON object of defaults plus overrides.

Precedence, lowest first: built-in defaults, the config file, the
``GTAN_SEED`` environment variable (seed only), command-line flags.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .graph import NORMALIZATION_MODES
from .model import AblationConfig, ModelConfig
from .trainer import TrainConfig

SEED_ENV = "GTAN_SEED"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # model
    dim: int = 64
    layers: int = 2
    fc_layers: int = 2
    hidden: int = 64
    att_dim: int = 64
    normalization: str = "none"
    ablation: tuple[str, ...] = ()
    word_vectors: str | None = None
    # training
    margin: float = 1.0
    lr: float = 0.0005
    epochs: int = 100
    patience: int = 10
    max_pairs: int | None = None
    batch_size: int = 1
    clip_norm: float | None = 5.0
    train_word_embeddings: bool = False
    workers: int = 0
    # ingest filters
    min_resp_answers: int = 5
    min_answer_words: int = 5
    min_answers: int = 5
    max_answers: int = 1000
    min_word_freq: int = 10
    # paths
    data_dir: str | None = None
    out_dir: str | None = None

    def __post_init__(self):
        if self.normalization not in NORMALIZATION_MODES:
            raise ConfigError(f"normalization must be one of {NORMALIZATION_MODES}")
        object.__setattr__(self, "ablation", tuple(self.ablation))
        try:
            AblationConfig.from_names(self.ablation)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        unknown = sorted(set(data) - set(cls.keys()))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls.from_dict(data)

    @classmethod
    def resolve(cls, path=None, overrides: Mapping[str, Any] | None = None,
                environ: Mapping[str, str] | None = None) -> "RunConfig":
        """Defaults <- file <- GTAN_SEED <- overrides (``None`` values skipped)."""
        base = cls.load(path) if path else cls()
        environ = os.environ if environ is None else environ
        if environ.get(SEED_ENV):
            try:
                base = replace(base, seed=int(environ[SEED_ENV]))
            except ValueError:
                raise ConfigError(f"{SEED_ENV} must be an integer") from None
        given = {k: v for k, v in (overrides or {}).items() if v is not None}
        unknown = sorted(set(given) - set(cls.keys()))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return replace(base, **given)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ablation"] = list(self.ablation)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    def model_config(self) -> ModelConfig:
        try:
            return ModelConfig(dim=self.dim, layers=self.layers, fc_layers=self.fc_layers,
                               hidden=self.hidden, att_dim=self.att_dim,
                               ablation=AblationConfig.from_names(self.ablation),
                               normalization=self.normalization)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def train_config(self) -> TrainConfig:
        return TrainConfig(margin=self.margin, lr=self.lr, epochs=self.epochs,
                           patience=self.patience, max_pairs=self.max_pairs,
                           batch_size=self.batch_size, clip_norm=self.clip_norm,
                           train_word_embeddings=self.train_word_embeddings,
                           seed=self.seed, workers=self.workers, model=self.model_config())

    def filter_kwargs(self) -> dict:
        return {k: getattr(self, k) for k in ("min_resp_answers", "min_answer_words",
                                              "min_answers", "max_answers", "min_word_freq")}
