"""Experiment configuration: model choice, optimization, loss weights, data knobs."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

from .errors import ConfigError

MODEL_KINDS = ("mlp", "gcn", "sage", "gat", "jmmfr-mc")
INNER_KINDS = ("mlp", "gcn", "sage", "gat")
BATCH_SIZES = (1000, 2000, 4000, 8000, 10000)
LEARNING_RATES = (0.001, 0.003, 0.005, 0.007, 0.01)
DROPOUT_RATES = (0.3, 0.5)
SELECTION_SIDES = ("member", "job", "both")


@dataclass(frozen=True)
class ExperimentConfig:
    encoder: str = "jmmfr-mc"
    batch_size: int = 2000
    learning_rate: float = 0.003
    dropout: float = 0.3
    beta1: float = 1.0          # restoration loss weight
    beta2: float = 1.0          # task loss weight
    epochs: int = 100
    patience: int = 20
    seed: int = 0
    depth: int = 1
    proj_dim: int = 64
    channel_dim: int = 32
    decoder_hidden: int = 32
    missing_ratio: float = 0.0
    split_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    inner_encoder: str = "sage"       # graph encoder inside jmmfr-mc
    use_restoration: bool | None = None  # None: on iff encoder == jmmfr-mc
    full_graph_restoration_loss: bool = False
    stratify_by_label: bool = False
    selection_side: str = "member"

    def __post_init__(self):
        if self.encoder not in MODEL_KINDS:
            raise ConfigError(f"unknown encoder kind {self.encoder!r}; choose from {MODEL_KINDS}")
        if self.inner_encoder not in INNER_KINDS:
            raise ConfigError(f"unknown inner encoder {self.inner_encoder!r}")
        if self.batch_size not in BATCH_SIZES:
            raise ConfigError(f"batch_size must be one of {BATCH_SIZES}, got {self.batch_size}")
        if self.learning_rate not in LEARNING_RATES:
            raise ConfigError(
                f"learning_rate must be one of {LEARNING_RATES}, got {self.learning_rate}")
        if self.dropout not in DROPOUT_RATES:
            raise ConfigError(f"dropout must be one of {DROPOUT_RATES}, got {self.dropout}")
        if self.beta1 < 0 or self.beta2 < 0:
            raise ConfigError("loss weights beta1/beta2 must be non-negative")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if min(self.proj_dim, self.channel_dim, self.decoder_hidden) < 1:
            raise ConfigError("layer widths must be positive")
        if not 0.0 <= self.missing_ratio <= 1.0:
            raise ConfigError("missing_ratio must be in [0, 1]")
        fr = tuple(float(f) for f in self.split_fractions)
        if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError("split_fractions must be three non-negative numbers summing to 1")
        object.__setattr__(self, "split_fractions", fr)
        if self.selection_side not in SELECTION_SIDES:
            raise ConfigError(f"selection_side must be one of {SELECTION_SIDES}")

    @property
    def restoration_enabled(self) -> bool:
        if self.use_restoration is None:
            return self.encoder == "jmmfr-mc"
        return self.use_restoration

    @property
    def resolved_encoder(self) -> str:
        """The per-channel encoder actually run."""
        return self.inner_encoder if self.encoder == "jmmfr-mc" else self.encoder

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split_fractions"] = list(self.split_fractions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "split_fractions" in d:
            d["split_fractions"] = tuple(d["split_fractions"])
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as f:
            try:
                doc = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path} must be a JSON object")
        return cls.from_dict(doc)

    def override(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)
