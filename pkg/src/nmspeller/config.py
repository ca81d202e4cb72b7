"""Training/model configuration with validation and (de)serialization."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .errors import ConfigError
from .masking import NGramMode


@dataclass
class TrainConfig:
    ngram: str = "trigram"
    fusion: bool = True
    mask_at_inference: bool = True
    learning_rate: float = 5e-5
    epochs: int = 10
    batch_size: int = 32
    weight_decay: float = 0.01
    seed: int = 0
    hidden_size: int = 64
    num_heads: int = 4
    semantic_layers: int = 2
    fusion_layers: int = 3
    ffn_size: int = 0  # 0 means 4 * hidden_size
    dropout: float = 0.1
    max_len: int = 128

    @property
    def mode(self):
        return NGramMode.parse(self.ngram)

    @property
    def effective_ffn_size(self):
        return self.ffn_size if self.ffn_size > 0 else 4 * self.hidden_size

    @property
    def variant(self):
        """Human-readable model family implied by the fusion/mask switches."""
        masked = self.mode is not NGramMode.NONE
        if self.fusion:
            return "dnspeller" if masked else "dgspeller"
        return "nm-bert" if masked else "baseline"

    def validate(self):
        self.ngram = NGramMode.parse(self.ngram).value
        positive = {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "hidden_size": self.hidden_size,
            "num_heads": self.num_heads,
            "semantic_layers": self.semantic_layers,
            "fusion_layers": self.fusion_layers,
            "max_len": self.max_len,
        }
        for key, value in positive.items():
            if value < 1:
                raise ConfigError(f"{key} must be positive, got {value}")
        for key, value in (("learning_rate", self.learning_rate),
                           ("weight_decay", self.weight_decay),
                           ("ffn_size", self.ffn_size)):
            if value < 0:
                raise ConfigError(f"{key} must be non-negative, got {value}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.hidden_size % self.num_heads != 0:
            raise ConfigError(
                f"num_heads {self.num_heads} must divide hidden_size {self.hidden_size}"
            )
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg
