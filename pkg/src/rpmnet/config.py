"""Training hyperparameters."""
from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass(frozen=True)
class TrainConfig:
    """Every knob of a training run.

    ``fisher_weight=0`` turns the Fisher regularizer off (the base
    reciprocal-point model); the default ``1.0`` enables it (the "++"
    variant).  ``logit_scale`` is a fixed, non-trainable multiplier on
    the distance logits.
    """

    ce_weight: float = 1.0
    margin_weight: float = 1.0
    fisher_weight: float = 1.0
    lr: float = 1e-3
    epochs: int = 60
    batch_size: int = 128
    hidden_dims: tuple = (256, 128)
    embed_dim: int = 64
    dropout_rate: float = 0.2
    logit_scale: float = 1.0
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.logit_scale <= 0:
            raise ValueError("logit_scale must be positive")
        if len(self.hidden_dims) != 2:
            raise ValueError("hidden_dims must name exactly two hidden layer sizes")
        if min(self.ce_weight, self.margin_weight, self.fisher_weight) < 0:
            raise ValueError("loss weights must be non-negative")
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        d = dict(d)
        if "hidden_dims" in d:
            d["hidden_dims"] = tuple(d["hidden_dims"])
        return cls(**d)
