"""Adapter configuration: one driver per model role."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ROLES = ("embed_window", "caption_image", "caption_video", "complete", "embed_text")


@dataclass
class RoleConfig:
    model: str = "stub"  # "stub" or "hf:<model id>"
    device: str = "cpu"
    max_tokens: int = 1024
    embed_dim: int = 32
    frames_per_window: int = 64
    video_frames: int = 32
    seed: int = 0


@dataclass
class AdapterConfig:
    roles: dict[str, RoleConfig] = field(default_factory=dict)
    canned_dir: Path | None = None
    record: bool = False

    @classmethod
    def all_stub(cls, embed_dim: int = 32, seed: int = 0, **kwargs) -> "AdapterConfig":
        roles = {
            role: RoleConfig(model="stub", embed_dim=embed_dim, seed=seed) for role in ROLES
        }
        return cls(roles=roles, **kwargs)

    @classmethod
    def from_toml(cls, path: Path) -> "AdapterConfig":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        roles = {}
        for role, settings in data.get("roles", {}).items():
            if role not in ROLES:
                raise ValueError(f"unknown role {role!r}")
            roles[role] = RoleConfig(**settings)
        canned = data.get("canned_dir")
        return cls(
            roles=roles,
            canned_dir=Path(canned) if canned else None,
            record=bool(data.get("record", False)),
        )
