"""Caption generation over the segment tree.

Caption leaves (the smallest caption-eligible nodes) get an image caption
of the key frame at their temporal midpoint; every other caption-eligible
node gets a video caption built from 32 evenly spaced frames between its
start and end times, inclusive. A node-level backend failure leaves the
node in ``missing`` so the orchestrator can retry it; it is never
silently dropped.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .backend import Backend, BackendRequest, frame_ref
from .errors import BackendError
from .segment import SegmentNode, SegmentTree

logger = logging.getLogger(__name__)

IMAGE_PROMPT = "Describe this image in detail."
VIDEO_PROMPT = "Describe this video in detail."
VIDEO_FRAME_COUNT = 32


@dataclass
class CaptionNode:
    node_id: int
    kind: str  # "frame" | "video"
    text: str
    source_frames: list[float]


@dataclass
class TreeOfCaptions:
    tree: SegmentTree
    captions: dict[int, CaptionNode] = field(default_factory=dict)
    missing: list[int] = field(default_factory=list)

    def caption_text(self, node_id: int) -> str | None:
        node = self.captions.get(node_id)
        return node.text if node else None

    def is_complete(self) -> bool:
        return not self.missing

    def to_jsonl_records(self) -> list[dict]:
        rows = []
        for nid in sorted(self.captions):
            c = self.captions[nid]
            rows.append(
                {
                    "video_id": self.tree.video_id,
                    "node_id": c.node_id,
                    "kind": c.kind,
                    "text": c.text,
                    "source_frames": c.source_frames,
                }
            )
        return rows


def select_frames(node: SegmentNode, kind: str, n_video_frames: int = VIDEO_FRAME_COUNT) -> list[float]:
    """Timestamps to caption from: the midpoint for frame kind, an
    inclusive linspace of ``n_video_frames`` points for video kind."""
    if kind == "frame":
        return [(node.start_s + node.end_s) / 2.0]
    if kind == "video":
        if n_video_frames < 2:
            raise ValueError("video captions need at least 2 frames")
        span = node.end_s - node.start_s
        step = span / (n_video_frames - 1)
        return [node.start_s + i * step for i in range(n_video_frames)]
    raise ValueError(f"unknown caption kind {kind!r}")


def caption_all(
    tree: SegmentTree,
    backend: Backend,
    frame_source: str,
    existing: dict[int, CaptionNode] | None = None,
    max_workers: int = 4,
    n_video_frames: int = VIDEO_FRAME_COUNT,
    resolution: int = 320,
    on_caption=None,
) -> TreeOfCaptions:
    """Caption every caption-eligible node of ``tree``.

    ``existing`` captions are kept as-is (resume support) and their nodes
    are not re-requested. ``on_caption`` is invoked with each freshly
    produced ``CaptionNode`` as soon as it is available.
    """
    toc = TreeOfCaptions(tree=tree, captions=dict(existing or {}))
    todo = [
        n
        for n in tree.nodes.values()
        if n.caption_eligible and n.id not in toc.captions
    ]

    def one(node: SegmentNode) -> CaptionNode:
        kind = "frame" if node.caption_leaf else "video"
        frames = select_frames(node, kind, n_video_frames)
        if kind == "frame":
            payload = {
                "image_ref": frame_ref(frame_source, frames[0]),
                "prompt": IMAGE_PROMPT,
            }
        else:
            payload = {
                "frame_refs": [frame_ref(frame_source, t, resolution) for t in frames],
                "prompt": VIDEO_PROMPT,
            }
        req = BackendRequest(
            kind=f"caption_{'image' if kind == 'frame' else 'video'}",
            payload=payload,
            request_id=f"{tree.video_id}:caption:{node.id}",
        )
        resp = backend.call(req)
        return CaptionNode(node_id=node.id, kind=kind, text=resp.result, source_frames=frames)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = {pool.submit(one, node): node for node in todo}
        for future, node in futures.items():
            try:
                cap = future.result()
            except BackendError as exc:
                logger.warning("caption failed for %s node %d: %s", tree.video_id, node.id, exc)
                toc.missing.append(node.id)
                continue
            toc.captions[node.id] = cap
            if on_caption is not None:
                on_caption(cap)
    toc.missing.sort()
    return toc


def load_captions(records: list[dict]) -> dict[int, CaptionNode]:
    out = {}
    for row in records:
        out[row["node_id"]] = CaptionNode(
            node_id=row["node_id"],
            kind=row["kind"],
            text=row["text"],
            source_frames=list(row["source_frames"]),
        )
    return out
