"""Uniform ``fit(docs, seed)`` wrappers around every model family."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from . import baselines, cantm
from .encoders import EncoderSpec, ExternalEncoder

KINDS = ("cantm", "bow_lr", "scholar", "frozen_head")


@dataclass
class ModelSpec:
    """What to train. ``options`` are passed to the family's config class."""

    kind: str = "cantm"
    options: dict = field(default_factory=dict)
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    external: Optional[ExternalEncoder] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.kind == "frozen_head" and self.external is None:
            raise ValueError("frozen_head needs external embeddings")

    def config(self, seed: int):
        cls = {
            "cantm": cantm.CantmConfig,
            "bow_lr": baselines.LogRegConfig,
            "scholar": baselines.ScholarConfig,
            "frozen_head": baselines.HeadConfig,
        }[self.kind]
        return replace(cls.from_dict({**cls().to_dict(), **self.options}), seed=seed)

    def fit(self, docs, seed: int = 0):
        cfg = self.config(seed)
        if self.kind == "cantm":
            return cantm.train(docs, self.encoder, cfg, external=self.external)
        if self.kind == "bow_lr":
            return baselines.train_bow_lr(docs, config=cfg)
        if self.kind == "scholar":
            return baselines.train_scholar(docs, config=cfg)
        return baselines.train_frozen_head(self.external, docs, cfg)
