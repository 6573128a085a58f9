"""Pipeline configuration with every tunable constant in one place."""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .windows import SamplingConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass
class PipelineConfig:
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    caption_threshold_s: float = 0.5
    annotation_threshold_s: float = 4.0
    global_context_depth: int = 2
    self_refine_rounds: int = 3
    caption_video_frames: int = 32
    caption_resolution: int = 320
    caption_max_tokens: int = 1024
    complete_max_tokens: int = 4096
    reasoning_effort: str = "high"
    embed_dim: int = 32
    backend_url: str | None = None
    backend_max_attempts: int = 3
    backend_max_in_flight: int = 8
    asr_char_budget: int = 8000
    workers: int = 4
    stage_attempts: int = 3
    seed: int = 0

    def with_fps(self, fps_native: float) -> "PipelineConfig":
        return replace(self, sampling=replace(self.sampling, fps_native=fps_native))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        sampling = SamplingConfig(**data.pop("sampling", {}))
        known = {f for f in cls.__dataclass_fields__ if f != "sampling"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(sampling=sampling, **data)

    @classmethod
    def from_toml(cls, path: Path) -> "PipelineConfig":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))
