"""End-to-end orchestration: embed, segment, caption, aggregate.

Each stage writes one artifact per video (temp file then rename), so a
partly processed video never looks finished and reruns are byte-for-byte
idempotent. The caption and aggregate stages additionally stream finished
nodes into a ``.partial`` sidecar, so a killed run resumes at node
granularity instead of redoing the whole stage.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aggregate import AnnotationRecord, VideoMetadata, annotate_video
from .backend import Backend, BackendRequest
from .captions import CaptionNode, TreeOfCaptions, caption_all, load_captions
from .config import PipelineConfig
from .errors import StageError
from .manifest import STAGES, ManifestEntry, filter_shard, load_state, save_state
from .segment import SegmentTree, build_tree, mark_eligibility
from .storage import append_jsonl_line, atomic_write_json, atomic_write_jsonl, iter_jsonl, read_json
from .windows import FrameEmbeddingSequence, aggregate, plan_windows

logger = logging.getLogger(__name__)


@dataclass
class RunSummary:
    processed: dict = field(default_factory=dict)  # stage -> {"done": n, "skipped": n, "failed": n}
    failures: list = field(default_factory=list)  # (video_id, stage, reason)

    def bump(self, stage: str, outcome: str) -> None:
        self.processed.setdefault(stage, {"done": 0, "skipped": 0, "failed": 0})
        self.processed[stage][outcome] += 1

    def all_done(self) -> bool:
        return not self.failures

    def to_json_dict(self) -> dict:
        return {"stages": self.processed, "failures": self.failures}


class ArtifactPaths:
    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)

    def embeddings(self, video_id: str) -> Path:
        return self.out_dir / "embeddings" / f"{video_id}.json"

    def tree(self, video_id: str) -> Path:
        return self.out_dir / "trees" / f"{video_id}.json"

    def captions(self, video_id: str) -> Path:
        return self.out_dir / "captions" / f"{video_id}.jsonl"

    def annotations(self, video_id: str) -> Path:
        return self.out_dir / "annotations" / f"{video_id}.jsonl"

    def state(self, video_id: str) -> Path:
        return self.out_dir / "state" / f"{video_id}.json"

    def artifact(self, stage: str, video_id: str) -> Path:
        return {
            "embed": self.embeddings,
            "segment": self.tree,
            "caption": self.captions,
            "aggregate": self.annotations,
        }[stage](video_id)


def _partial(path: Path) -> Path:
    return path.with_name(path.name + ".partial")


class PipelineRunner:
    def __init__(self, config: PipelineConfig, out_dir: Path, backend: Backend):
        self.config = config
        self.paths = ArtifactPaths(out_dir)
        self.backend = backend

    # ---------------- stage implementations ----------------

    def _stage_embed(self, entry: ManifestEntry) -> None:
        cfg = self.config.with_fps(entry.fps_native).sampling
        n_sampled = cfg.n_sampled(entry.n_frames)
        windows = plan_windows(n_sampled, cfg)

        def embed_window(window: tuple[int, int]) -> tuple[tuple[int, int], np.ndarray]:
            lo, hi = window
            refs = [f"{entry.frame_source}#f={f * cfg.subsample_stride}" for f in range(lo, hi)]
            span = hi - lo
            # encoders take a fixed frame count; short windows repeat the
            # final frame and the padded outputs are dropped after the call
            while len(refs) < cfg.window_len:
                refs.append(refs[-1])
            req = BackendRequest(
                kind="embed_window",
                payload={"frames": refs, "count": len(refs)},
                request_id=f"{entry.video_id}:embed:{lo}",
            )
            vectors = np.asarray(self.backend.call(req).result, dtype=np.float64)
            return window, vectors[:span]

        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            per_window = list(pool.map(embed_window, windows))
        seq = aggregate(per_window, n_sampled, cfg, video_id=entry.video_id)
        atomic_write_json(self.paths.embeddings(entry.video_id), seq.to_json_dict())

    def _stage_segment(self, entry: ManifestEntry) -> None:
        seq = FrameEmbeddingSequence.from_json_dict(read_json(self.paths.embeddings(entry.video_id)))
        cfg = self.config.with_fps(entry.fps_native)
        tree = build_tree(seq, frame_duration_s=cfg.sampling.frame_duration_s)
        mark_eligibility(tree, cfg.caption_threshold_s, cfg.annotation_threshold_s)
        atomic_write_json(self.paths.tree(entry.video_id), tree.to_json_dict())

    def _stage_caption(self, entry: ManifestEntry) -> None:
        tree = SegmentTree.from_json_dict(read_json(self.paths.tree(entry.video_id)))
        final_path = self.paths.captions(entry.video_id)
        partial_path = _partial(final_path)
        existing: dict[int, CaptionNode] = {}
        if partial_path.exists():
            existing = load_captions(list(iter_jsonl(partial_path)))
            logger.info("resuming captions for %s: %d already done", entry.video_id, len(existing))

        def persist(cap: CaptionNode) -> None:
            append_jsonl_line(
                partial_path,
                {
                    "video_id": entry.video_id,
                    "node_id": cap.node_id,
                    "kind": cap.kind,
                    "text": cap.text,
                    "source_frames": cap.source_frames,
                },
            )

        toc = caption_all(
            tree,
            self.backend,
            entry.frame_source,
            existing=existing,
            max_workers=self.config.workers,
            n_video_frames=self.config.caption_video_frames,
            resolution=self.config.caption_resolution,
            on_caption=persist,
        )
        if not toc.is_complete():
            raise StageError(f"captions missing for nodes {toc.missing[:8]}")
        atomic_write_jsonl(final_path, toc.to_jsonl_records())
        partial_path.unlink(missing_ok=True)

    def _stage_aggregate(self, entry: ManifestEntry) -> None:
        tree = SegmentTree.from_json_dict(read_json(self.paths.tree(entry.video_id)))
        captions = load_captions(list(iter_jsonl(self.paths.captions(entry.video_id))))
        toc = TreeOfCaptions(tree=tree, captions=captions)
        meta = VideoMetadata(
            video_id=entry.video_id,
            title=entry.title,
            description=entry.description,
            asr_transcript=entry.asr_transcript,
            duration_s=entry.duration_s or entry.n_frames / entry.fps_native,
        )
        final_path = self.paths.annotations(entry.video_id)
        partial_path = _partial(final_path)
        done_rows: dict[int, dict] = {}
        if partial_path.exists():
            done_rows = {row["node_id"]: row for row in iter_jsonl(partial_path)}
            logger.info(
                "resuming annotations for %s: %d already done", entry.video_id, len(done_rows)
            )

        def persist(record: AnnotationRecord) -> None:
            append_jsonl_line(partial_path, record.to_json_dict())

        cfg = self.config
        result = annotate_video(
            toc,
            meta,
            self.backend,
            rounds=cfg.self_refine_rounds,
            global_depth=cfg.global_context_depth,
            max_tokens=cfg.complete_max_tokens,
            reasoning_effort=cfg.reasoning_effort,
            asr_char_budget=cfg.asr_char_budget,
            max_workers=cfg.workers,
            skip_node_ids=set(done_rows),
            on_record=persist,
        )
        if result.failures:
            raise StageError(f"annotation failed for nodes {result.failures[:4]}")
        rows = {r.node_id: r.to_json_dict() for r in result.records}
        rows.update(done_rows)
        atomic_write_jsonl(final_path, [rows[nid] for nid in sorted(rows)])
        partial_path.unlink(missing_ok=True)

    # ---------------- driver ----------------

    def _run_video(self, entry: ManifestEntry, stages: list[str], force: bool) -> list[tuple]:
        """Returns (stage, outcome, reason) events in stage order."""
        state_path = self.paths.state(entry.video_id)
        state = load_state(state_path, entry.video_id)
        impls = {
            "embed": self._stage_embed,
            "segment": self._stage_segment,
            "caption": self._stage_caption,
            "aggregate": self._stage_aggregate,
        }
        events: list[tuple] = []
        for stage in stages:
            artifact = self.paths.artifact(stage, entry.video_id)
            if artifact.exists() and not force:
                state.mark(stage, "done")
                save_state(state_path, state)
                events.append((stage, "skipped", None))
                continue
            error: str | None = None
            for _ in range(max(1, self.config.stage_attempts)):
                try:
                    impls[stage](entry)
                    error = None
                    break
                except Exception as exc:  # per-video failures must not kill the run
                    error = str(exc)
                    state.mark(stage, "failed", error=error)
                    save_state(state_path, state)
                    logger.warning("stage %s failed for %s: %s", stage, entry.video_id, exc)
            if error is not None:
                events.append((stage, "failed", error))
                return events  # later stages depend on this one
            state.mark(stage, "done")
            save_state(state_path, state)
            events.append((stage, "done", None))
        return events

    def run(
        self,
        entries: list[ManifestEntry],
        stages: list[str] | None = None,
        shard: tuple[int, int] | None = None,
        force: bool = False,
    ) -> RunSummary:
        stages = list(stages or STAGES)
        order = [s for s in STAGES if s in stages]
        if order != stages:
            raise ValueError(f"stages must follow pipeline order {STAGES}, got {stages}")
        indices = [STAGES.index(s) for s in stages]
        if indices != list(range(indices[0], indices[0] + len(indices))):
            raise ValueError(f"stages must be contiguous, got {stages}")
        if shard is not None:
            entries = filter_shard(entries, *shard)
        summary = RunSummary()
        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            futures = [pool.submit(self._run_video, entry, stages, force) for entry in entries]
            for entry, future in zip(entries, futures):
                for stage, outcome, reason in future.result():
                    summary.bump(stage, outcome)
                    if outcome == "failed":
                        summary.failures.append((entry.video_id, stage, reason))
        return summary


# ---------------- artifact validation ----------------


def _check_tree(obj: dict, config: PipelineConfig, violations: list, fname: str) -> None:
    nodes = {row["id"]: row for row in obj["nodes"]}
    roots = [nid for nid, row in nodes.items() if row["parent"] is None]
    if len(roots) != 1:
        violations.append({"file": fname, "rule": "single_root", "detail": f"{len(roots)} roots"})
        return
    for nid, row in nodes.items():
        if row["lo"] >= row["hi"]:
            violations.append({"file": fname, "rule": "nonempty_range", "detail": f"node {nid}"})
        duration = row["end_s"] - row["start_s"]
        if row["caption_eligible"] != (duration > config.caption_threshold_s):
            violations.append({"file": fname, "rule": "caption_flag", "detail": f"node {nid}"})
        if row["annotation_eligible"] != (duration >= config.annotation_threshold_s):
            violations.append({"file": fname, "rule": "annotation_flag", "detail": f"node {nid}"})
        children = row["children"]
        if children:
            if len(children) != 2:
                violations.append({"file": fname, "rule": "binary", "detail": f"node {nid}"})
                continue
            a, b = (nodes[c] for c in children)
            if not (a["lo"] == row["lo"] and a["hi"] == b["lo"] and b["hi"] == row["hi"]):
                violations.append({"file": fname, "rule": "partition", "detail": f"node {nid}"})
            for c in children:
                if nodes[c]["parent"] != nid:
                    violations.append({"file": fname, "rule": "parent_link", "detail": f"node {c}"})
    root = nodes[roots[0]]
    spans = sorted((row["lo"], row["hi"]) for row in nodes.values() if not row["children"])
    cursor = root["lo"]
    for lo, hi in spans:
        if lo != cursor:
            violations.append({"file": fname, "rule": "leaf_partition", "detail": f"gap at {cursor}"})
            return
        cursor = hi
    if cursor != root["hi"]:
        violations.append({"file": fname, "rule": "leaf_partition", "detail": f"ends at {cursor}"})


def validate_artifacts(out_dir: Path, config: PipelineConfig | None = None) -> list[dict]:
    """Schema and cross-reference checks over every persisted artifact."""
    config = config or PipelineConfig()
    paths = ArtifactPaths(Path(out_dir))
    violations: list[dict] = []

    trees: dict[str, dict] = {}
    tree_dir = paths.out_dir / "trees"
    if tree_dir.is_dir():
        for tree_file in sorted(tree_dir.glob("*.json")):
            obj = read_json(tree_file)
            trees[obj["video_id"]] = obj
            _check_tree(obj, config, violations, tree_file.name)

    emb_dir = paths.out_dir / "embeddings"
    if emb_dir.is_dir():
        for emb_file in sorted(emb_dir.glob("*.json")):
            obj = read_json(emb_file)
            if len(obj["timestamps"]) != len(obj["vectors"]):
                violations.append({"file": emb_file.name, "rule": "length_match", "detail": ""})
            if any(len(v) != obj["dim"] for v in obj["vectors"]):
                violations.append({"file": emb_file.name, "rule": "dim_stable", "detail": ""})
            ts = obj["timestamps"]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                violations.append({"file": emb_file.name, "rule": "monotone_time", "detail": ""})

    cap_dir = paths.out_dir / "captions"
    if cap_dir.is_dir():
        for cap_file in sorted(cap_dir.glob("*.jsonl")):
            seen: set[int] = set()
            video_id = cap_file.stem
            nodes = {row["id"]: row for row in trees.get(video_id, {}).get("nodes", [])}
            for row in iter_jsonl(cap_file):
                node = nodes.get(row["node_id"])
                if node is None:
                    violations.append(
                        {
                            "file": cap_file.name,
                            "rule": "caption_node_exists",
                            "detail": str(row["node_id"]),
                        }
                    )
                    continue
                seen.add(row["node_id"])
                if not node["caption_eligible"]:
                    violations.append(
                        {
                            "file": cap_file.name,
                            "rule": "caption_eligibility",
                            "detail": str(row["node_id"]),
                        }
                    )
                expected_kind = "frame" if node["caption_leaf"] else "video"
                if row["kind"] != expected_kind:
                    violations.append(
                        {"file": cap_file.name, "rule": "caption_kind", "detail": str(row["node_id"])}
                    )
                lo, hi = node["start_s"] - 1e-9, node["end_s"] + 1e-9
                if any(not (lo <= t <= hi) for t in row["source_frames"]):
                    violations.append(
                        {"file": cap_file.name, "rule": "frames_in_span", "detail": str(row["node_id"])}
                    )
            eligible = {nid for nid, n in nodes.items() if n["caption_eligible"]}
            for nid in sorted(eligible - seen):
                violations.append(
                    {"file": cap_file.name, "rule": "caption_complete", "detail": str(nid)}
                )

    ann_dir = paths.out_dir / "annotations"
    if ann_dir.is_dir():
        for ann_file in sorted(ann_dir.glob("*.jsonl")):
            video_id = ann_file.stem
            nodes = {row["id"]: row for row in trees.get(video_id, {}).get("nodes", [])}
            for row in iter_jsonl(ann_file):
                node = nodes.get(row["node_id"])
                if node is None:
                    violations.append(
                        {
                            "file": ann_file.name,
                            "rule": "annotation_node_exists",
                            "detail": str(row["node_id"]),
                        }
                    )
                    continue
                if not node["annotation_eligible"]:
                    violations.append(
                        {
                            "file": ann_file.name,
                            "rule": "annotation_eligibility",
                            "detail": str(row["node_id"]),
                        }
                    )
                fields = [
                    row.get("summary", {}).get("brief"),
                    row.get("summary", {}).get("detailed"),
                    row.get("action", {}).get("brief"),
                    row.get("action", {}).get("detailed"),
                    row.get("action", {}).get("actor"),
                ]
                if any(not isinstance(f, str) or not f for f in fields):
                    violations.append(
                        {"file": ann_file.name, "rule": "five_fields", "detail": str(row["node_id"])}
                    )
    return violations
