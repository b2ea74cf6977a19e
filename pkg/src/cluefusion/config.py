"""Run configuration with CLI > file > default precedence."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Any, Optional

from .combiner import CombinationSchedule
from .core import DEFAULT_EPOCH
from .errors import ConfigError
from .perceiver import DEFAULT_EXTRACTORS, EXTRACTOR_ORDER
from .retriever import MODES, IMAGE_IMAGE

HIER_CHOICES = ("all", "1", "3")


@dataclass
class PipelineConfig:
    ht: int = 5
    rt: float = 90.0
    schedule: str = "singles,pairs,all"
    retrieval_mode: str = IMAGE_IMAGE
    no_filter: bool = False
    no_retrieval: bool = False
    hier_1_only: bool = False
    hier_3_only: bool = False
    filter_retrieval: bool = True
    fail_open: bool = False
    fail_hard: bool = False
    top_k: int = 5
    workers: int = 1
    cache_dir: Optional[str] = None
    epoch: int = DEFAULT_EPOCH
    time_granularity: str = "native"
    extractors: tuple[str, ...] = DEFAULT_EXTRACTORS
    chat_model: str = "gpt-3.5-turbo"
    vision_model: str = "blip2-flan-t5-xl"
    embed_model: str = "clip-vit-b-32"
    endpoints: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.extractors = tuple(self.extractors)
        self.validate()

    def validate(self) -> None:
        if isinstance(self.ht, bool) or not isinstance(self.ht, int) or self.ht < 1:
            raise ConfigError(f"hash threshold must be an integer >= 1, got {self.ht!r}")
        if not 0 <= float(self.rt) <= 100:
            raise ConfigError(f"retrieval threshold must lie in [0, 100], got {self.rt!r}")
        if self.retrieval_mode not in MODES:
            raise ConfigError(f"retrieval mode must be one of {MODES}")
        if self.hier_1_only and self.hier_3_only:
            raise ConfigError("hier_1_only and hier_3_only are exclusive")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.time_granularity not in ("native", "year"):
            raise ConfigError("time_granularity must be 'native' or 'year'")
        unknown = set(self.extractors) - set(EXTRACTOR_ORDER)
        if unknown:
            raise ConfigError(f"unknown extractors {sorted(unknown)}")
        CombinationSchedule.parse(self.schedule)

    def combination_schedule(self) -> CombinationSchedule:
        if self.hier_1_only:
            return CombinationSchedule(("singles",))
        if self.hier_3_only:
            return CombinationSchedule(("all",))
        return CombinationSchedule.parse(self.schedule)

    def replace(self, **changes: Any) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["extractors"] = list(self.extractors)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: Optional[str | os.PathLike] = None, **overrides: Any) -> "PipelineConfig":
        """Defaults, then the JSON file at ``path``, then non-None ``overrides``."""
        data: dict = {}
        if path is not None:
            try:
                with open(path, encoding="utf-8") as fh:
                    data = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(data, dict):
                raise ConfigError("config file must hold a JSON object")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)
