"""Job manifest: the per-video work list with durable stage state.

The manifest JSONL is read-only input; per-video stage progress lives in
small state files under the output directory, updated atomically by the
single worker that owns the video. Stage status is monotone: "done" is
written only after the stage artifact has been atomically renamed into
place, and is never reverted.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .storage import atomic_write_json, iter_jsonl, read_json

STAGES = ("embed", "segment", "caption", "aggregate")


@dataclass
class ManifestEntry:
    video_id: str
    frame_source: str
    fps_native: float
    n_frames: int  # raw frame count before subsampling
    title: str = ""
    description: str = ""
    asr_transcript: str | None = None
    duration_s: float | None = None

    @classmethod
    def from_dict(cls, row: dict) -> "ManifestEntry":
        return cls(
            video_id=row["video_id"],
            frame_source=row["frame_source"],
            fps_native=float(row["fps_native"]),
            n_frames=int(row["n_frames"]),
            title=row.get("title", ""),
            description=row.get("description", ""),
            asr_transcript=row.get("asr_transcript"),
            duration_s=row.get("duration_s"),
        )


def load_manifest(path: Path) -> list[ManifestEntry]:
    entries = [ManifestEntry.from_dict(row) for row in iter_jsonl(path)]
    seen = set()
    for e in entries:
        if e.video_id in seen:
            raise ValueError(f"duplicate video_id in manifest: {e.video_id}")
        seen.add(e.video_id)
    return entries


def shard_of(video_id: str, total: int) -> int:
    """Stable shard assignment; sha256 keeps it identical across processes."""
    digest = hashlib.sha256(video_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % total


def filter_shard(entries: list[ManifestEntry], index: int, total: int) -> list[ManifestEntry]:
    if not (0 <= index < total):
        raise ValueError(f"shard index {index} out of range for total {total}")
    return [e for e in entries if shard_of(e.video_id, total) == index]


@dataclass
class VideoState:
    """Stage bookkeeping for one video."""

    video_id: str
    stages: dict[str, dict] = field(default_factory=dict)

    def status(self, stage: str) -> str:
        return self.stages.get(stage, {}).get("status", "pending")

    def attempts(self, stage: str) -> int:
        return self.stages.get(stage, {}).get("attempts", 0)

    def mark(self, stage: str, status: str, error: str | None = None) -> None:
        entry = self.stages.setdefault(stage, {"status": "pending", "attempts": 0})
        if entry["status"] == "done":
            return  # done is terminal
        if status == "failed":
            entry["attempts"] = entry.get("attempts", 0) + 1
        entry["status"] = status
        if error is not None:
            entry["error"] = error
        elif "error" in entry and status == "done":
            del entry["error"]

    def to_json_dict(self) -> dict:
        return {"video_id": self.video_id, "stages": self.stages}


def load_state(path: Path, video_id: str) -> VideoState:
    if path.exists():
        data = read_json(path)
        return VideoState(video_id=data["video_id"], stages=data["stages"])
    return VideoState(video_id=video_id)


def save_state(path: Path, state: VideoState) -> None:
    atomic_write_json(path, state.to_json_dict())
