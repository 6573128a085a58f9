"""Overlapping-window planning and per-frame embedding aggregation.

A video is embedded window by window (64 sampled frames per window, an
8-frame stride between windows, frames subsampled 1-in-4 by default).
Overlapping windows each contribute a vector for the frames they cover;
the per-frame output is the plain arithmetic mean of the available
contributions. A final window is clamped to the sequence end whenever the
regular stride would leave trailing frames uncovered, and a video shorter
than one window gets a single truncated window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive_int, check_positive_real
from .errors import CoverageGap

Window = tuple[int, int]


@dataclass(frozen=True)
class SamplingConfig:
    subsample_stride: int = 4
    window_len: int = 64
    window_stride: int = 8
    fps_native: float = 30.0

    def __post_init__(self):
        check_positive_int(self.subsample_stride, "subsample_stride")
        check_positive_int(self.window_len, "window_len")
        check_positive_int(self.window_stride, "window_stride")
        check_positive_real(self.fps_native, "fps_native")
        if self.window_stride > self.window_len:
            raise ValueError("window_stride must not exceed window_len")

    @property
    def frame_duration_s(self) -> float:
        """Seconds spanned by one sampled frame."""
        return self.subsample_stride / self.fps_native

    def n_sampled(self, n_raw_frames: int) -> int:
        check_positive_int(n_raw_frames, "n_raw_frames")
        return (n_raw_frames + self.subsample_stride - 1) // self.subsample_stride


@dataclass
class FrameEmbeddingSequence:
    """One embedding per sampled frame, with the frame's start timestamp."""

    video_id: str
    timestamps: list[float]
    vectors: np.ndarray = field(repr=False)
    dim: int

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValueError("vectors must be 2-D (n_frames, dim)")
        if len(self.timestamps) != self.vectors.shape[0]:
            raise ValueError("timestamps and vectors lengths differ")
        if self.vectors.shape[1] != self.dim:
            raise ValueError(f"vector width {self.vectors.shape[1]} != dim {self.dim}")
        ts = np.asarray(self.timestamps, dtype=np.float64)
        if len(ts) > 1 and not np.all(np.diff(ts) > 0):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def to_json_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "dim": self.dim,
            "timestamps": [float(t) for t in self.timestamps],
            "vectors": self.vectors.tolist(),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "FrameEmbeddingSequence":
        return cls(
            video_id=obj["video_id"],
            timestamps=list(obj["timestamps"]),
            vectors=np.asarray(obj["vectors"], dtype=np.float64),
            dim=int(obj["dim"]),
        )


def plan_windows(n_frames: int, cfg: SamplingConfig) -> list[Window]:
    """Plan [start, end) windows over ``n_frames`` sampled frames.

    Regular windows start at multiples of ``window_stride`` and span
    ``window_len`` frames. If the last regular window stops short of the
    end, one extra window clamped to ``[n_frames - window_len, n_frames)``
    is appended so every frame is covered.
    """
    check_positive_int(n_frames, "n_frames")
    if n_frames < cfg.window_len:
        return [(0, n_frames)]
    windows = []
    start = 0
    while start + cfg.window_len <= n_frames:
        windows.append((start, start + cfg.window_len))
        start += cfg.window_stride
    if windows[-1][1] < n_frames:
        windows.append((n_frames - cfg.window_len, n_frames))
    return windows


def aggregate(
    per_window: list[tuple[Window, np.ndarray]],
    n_frames: int,
    cfg: SamplingConfig,
    video_id: str = "",
) -> FrameEmbeddingSequence:
    """Average overlapping window outputs into one vector per frame.

    ``per_window`` pairs each planned window with its (span, dim) array of
    per-frame vectors. Windows are sorted before accumulation so the
    result is identical no matter what order they arrive in.
    """
    check_positive_int(n_frames, "n_frames")
    if not per_window:
        raise CoverageGap("no window outputs supplied")
    ordered = sorted(per_window, key=lambda item: item[0])
    dim = np.asarray(ordered[0][1]).shape[1]
    acc = np.zeros((n_frames, dim), dtype=np.float64)
    hits = np.zeros(n_frames, dtype=np.int64)
    for (lo, hi), vecs in ordered:
        vecs = np.asarray(vecs, dtype=np.float64)
        if not (0 <= lo < hi <= n_frames):
            raise ValueError(f"window ({lo},{hi}) out of bounds for n={n_frames}")
        if vecs.shape != (hi - lo, dim):
            raise ValueError(f"window ({lo},{hi}) expects {(hi - lo, dim)}, got {vecs.shape}")
        acc[lo:hi] += vecs
        hits[lo:hi] += 1
    if np.any(hits == 0):
        uncovered = np.flatnonzero(hits == 0)
        raise CoverageGap(f"frames with no window coverage: {uncovered[:8].tolist()}...")
    out = acc / hits[:, None]
    timestamps = [f * cfg.subsample_stride / cfg.fps_native for f in range(n_frames)]
    return FrameEmbeddingSequence(video_id=video_id, timestamps=timestamps, vectors=out, dim=dim)
