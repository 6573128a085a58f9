"""Structured annotation of tree nodes through iterated LLM refinement.

For every annotation-eligible node (4 s or longer) the caption tree is
serialized to Markdown, combined with video metadata into the versioned
prompt template, and sent through three completion rounds: the first at
high reasoning effort, the later rounds re-presenting the full context
plus the previous draft plus a fixed revision instruction. The final
draft must satisfy the annotation response schema; one re-request is
allowed per round before the node fails.

Each round's reply is parsed and schema-checked, not just the last one,
so a malformed early draft is retried instead of being refined into
garbage.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import jsonschema

from .backend import Backend, BackendRequest
from .captions import TreeOfCaptions
from .errors import BackendError, MissingPlaceholder, SchemaViolation

logger = logging.getLogger(__name__)

NA_SENTINEL = "N/A"

PLACEHOLDERS = (
    "video_metadata",
    "formatted_global_tree_of_captions",
    "formatted_current_tree_of_captions",
    "start_time",
    "end_time",
    "global_start_time",
    "global_end_time",
)


def _resource_text(name: str) -> str:
    return resources.files("captree.resources").joinpath(name).read_text("utf-8")


def load_prompt_template() -> str:
    return _resource_text("aggregate_prompt.txt")


def load_refine_instruction() -> str:
    return _resource_text("refine_instruction.txt").rstrip("\n")


def load_annotation_schema() -> dict:
    return json.loads(_resource_text("annotation_schema.json"))


@dataclass
class VideoMetadata:
    video_id: str
    title: str = ""
    description: str = ""
    asr_transcript: str | None = None
    duration_s: float = 0.0


@dataclass
class PromptContext:
    current_md: str
    global_md: str
    metadata_block: str
    start_time: float
    end_time: float
    global_start_time: float
    global_end_time: float


@dataclass
class AnnotationRecord:
    node_id: int
    summary_brief: str
    summary_detailed: str
    action_brief: str
    action_detailed: str
    actor: str
    rounds: int
    na_action: bool
    video_id: str = ""
    start_s: float = 0.0
    end_s: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "node_id": self.node_id,
            "start_s": self.start_s,
            "end_s": self.end_s,
            "summary": {"brief": self.summary_brief, "detailed": self.summary_detailed},
            "action": {
                "brief": self.action_brief,
                "detailed": self.action_detailed,
                "actor": self.actor,
            },
            "na_action": self.na_action,
            "rounds": self.rounds,
        }


@dataclass
class AnnotationRunResult:
    records: list[AnnotationRecord] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)


def serialize_dfs(toc: TreeOfCaptions, subtree_root: int, max_depth: int | None = None) -> str:
    """Depth-first Markdown rendering of a captioned subtree.

    Each captioned node contributes a heading of ``depth + 1`` hash marks
    carrying its time span, then its caption paragraph. Nodes deeper than
    ``max_depth`` are omitted. Uncaptioned nodes emit nothing themselves
    but their captioned descendants are still visited.
    """
    blocks: list[str] = []

    def visit(node_id: int, depth: int) -> None:
        if max_depth is not None and depth > max_depth:
            return
        node = toc.tree.node(node_id)
        caption = toc.caption_text(node_id)
        if caption is not None:
            heading = "#" * (depth + 1)
            blocks.append(f"{heading} [{node.start_s:.1f}s – {node.end_s:.1f}s]\n{caption}\n")
        for child in node.children:
            visit(child, depth + 1)

    visit(subtree_root, 0)
    return "\n".join(blocks)


def format_metadata_block(meta: VideoMetadata, asr_char_budget: int = 8000) -> str:
    """Human-readable metadata lines; absent fields render the N/A sentinel."""
    asr = meta.asr_transcript
    if asr and asr_char_budget and len(asr) > asr_char_budget:
        asr = asr[:asr_char_budget] + " [truncated]"
    lines = [
        f"Title: {meta.title or NA_SENTINEL}",
        f"Description: {meta.description or NA_SENTINEL}",
        f"ASR transcript: {asr or NA_SENTINEL}",
    ]
    return "\n".join(lines)


def build_context(
    toc: TreeOfCaptions,
    meta: VideoMetadata,
    node_id: int,
    global_depth: int = 2,
    current_depth: int | None = None,
    asr_char_budget: int = 8000,
) -> PromptContext:
    node = toc.tree.node(node_id)
    root = toc.tree.node(toc.tree.root)
    return PromptContext(
        current_md=serialize_dfs(toc, node_id, current_depth),
        global_md=serialize_dfs(toc, toc.tree.root, global_depth),
        metadata_block=format_metadata_block(meta, asr_char_budget),
        start_time=node.start_s,
        end_time=node.end_s,
        global_start_time=root.start_s,
        global_end_time=root.end_s,
    )


def build_prompt(ctx: PromptContext, template: str | None = None) -> str:
    """Instantiate the aggregation prompt template.

    Placeholder tokens are substituted literally; times are rendered with
    one decimal place. Raises ``MissingPlaceholder`` when a value is
    absent or a template token remains unfilled.
    """
    def fmt(seconds: float | None) -> str | None:
        return None if seconds is None else f"{seconds:.1f}"

    values = {
        "video_metadata": ctx.metadata_block,
        "formatted_global_tree_of_captions": ctx.global_md,
        "formatted_current_tree_of_captions": ctx.current_md,
        "start_time": fmt(ctx.start_time),
        "end_time": fmt(ctx.end_time),
        "global_start_time": fmt(ctx.global_start_time),
        "global_end_time": fmt(ctx.global_end_time),
    }
    prompt = template if template is not None else load_prompt_template()
    for name in PLACEHOLDERS:
        token = "{" + name + "}"
        value = values.get(name)
        if token in prompt and value is None:
            raise MissingPlaceholder(f"no value for placeholder {token}")
        prompt = prompt.replace(token, value if value is not None else "")
    leftover = [n for n in PLACEHOLDERS if "{" + n + "}" in prompt]
    if leftover:
        raise MissingPlaceholder(f"unfilled placeholders: {leftover}")
    return prompt


def refine_prompt(base_prompt: str, previous_response: str, instruction: str | None = None) -> str:
    """Single-turn revision prompt: full context, last draft, fixed instruction."""
    if instruction is None:
        instruction = load_refine_instruction()
    return f"{base_prompt}\n\n# Previous draft\n\n{previous_response}\n\n{instruction}\n"


def _extract_json(text: str) -> dict:
    text = text.strip()
    if text.startswith("```"):
        text = text.strip("`")
        if text.startswith("json"):
            text = text[4:]
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        lo, hi = text.find("{"), text.rfind("}")
        if lo < 0 or hi <= lo:
            raise SchemaViolation("response contains no JSON object")
        try:
            return json.loads(text[lo : hi + 1])
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"response JSON does not parse: {exc}") from exc


def parse_annotation(text: str, schema: dict | None = None) -> dict:
    """Parse and validate one completion; returns the five fields flat."""
    body = _extract_json(text)
    schema = schema or load_annotation_schema()
    try:
        jsonschema.validate(body, schema)
    except jsonschema.ValidationError as exc:
        raise SchemaViolation(f"annotation schema violation: {exc.message}") from exc
    fields = {
        "summary_brief": body.get("summary", {}).get("brief"),
        "summary_detailed": body.get("summary", {}).get("detailed"),
        "action_brief": body.get("action", {}).get("brief"),
        "action_detailed": body.get("action", {}).get("detailed"),
        "actor": body.get("action", {}).get("actor"),
    }
    empty = [k for k, v in fields.items() if not isinstance(v, str) or not v.strip()]
    if empty:
        raise SchemaViolation(f"empty or missing fields: {empty}")
    first_token = fields["action_brief"].split()[0].lower()
    if first_token.endswith("ing") and fields["action_brief"] != NA_SENTINEL:
        logger.warning("action.brief starts with an -ing form: %r", fields["action_brief"])
    return fields


def self_refine(
    prompt: str,
    backend: Backend,
    rounds: int = 3,
    max_tokens: int = 4096,
    reasoning_effort: str = "high",
    request_id_prefix: str = "refine",
    schema: dict | None = None,
) -> tuple[AnnotationRecord, list[str]]:
    """Run the fixed-round refinement loop for one prompt.

    Returns the record parsed from the last round plus the raw response
    of every round. Each round allows a single re-request on parse or
    schema failure; a second failure raises ``SchemaViolation``.
    """
    schema = schema or load_annotation_schema()
    instruction = load_refine_instruction()
    responses: list[str] = []
    fields: dict | None = None
    for rnd in range(1, rounds + 1):
        round_prompt = prompt if rnd == 1 else refine_prompt(prompt, responses[-1], instruction)
        payload = {
            "prompt": round_prompt,
            # the first draft always runs at high effort; only the refine
            # rounds' effort is configurable
            "max_tokens": max_tokens,
            "reasoning_effort": "high" if rnd == 1 else reasoning_effort,
            "response_schema": schema,
        }
        for attempt in (1, 2):
            resp = backend.call(
                BackendRequest(
                    kind="complete",
                    payload=payload,
                    request_id=f"{request_id_prefix}:r{rnd}a{attempt}",
                )
            )
            try:
                fields = parse_annotation(resp.result, schema)
                break
            except SchemaViolation:
                if attempt == 2:
                    raise
                logger.warning("round %d output rejected, re-requesting once", rnd)
        responses.append(resp.result)
    na = fields["action_brief"] == NA_SENTINEL and fields["action_detailed"] == NA_SENTINEL
    record = AnnotationRecord(
        node_id=-1,
        summary_brief=fields["summary_brief"],
        summary_detailed=fields["summary_detailed"],
        action_brief=fields["action_brief"],
        action_detailed=fields["action_detailed"],
        actor=fields["actor"],
        rounds=rounds,
        na_action=na,
    )
    return record, responses


def annotate_video(
    toc: TreeOfCaptions,
    meta: VideoMetadata,
    backend: Backend,
    rounds: int = 3,
    global_depth: int = 2,
    max_tokens: int = 4096,
    reasoning_effort: str = "high",
    asr_char_budget: int = 8000,
    max_workers: int = 4,
    skip_node_ids: set[int] | None = None,
    on_record=None,
) -> AnnotationRunResult:
    """Annotate every annotation-eligible node of the captioned tree.

    Nodes run independently; partial results are kept and failures are
    reported per node. ``skip_node_ids`` supports resume.
    """
    tree = toc.tree
    skip = skip_node_ids or set()
    todo = sorted(
        n.id
        for n in tree.nodes.values()
        if n.annotation_eligible and n.id not in skip
    )
    template = load_prompt_template()
    schema = load_annotation_schema()

    def one(node_id: int) -> AnnotationRecord:
        ctx = build_context(toc, meta, node_id, global_depth, asr_char_budget=asr_char_budget)
        prompt = build_prompt(ctx, template)
        record, _ = self_refine(
            prompt,
            backend,
            rounds=rounds,
            max_tokens=max_tokens,
            reasoning_effort=reasoning_effort,
            request_id_prefix=f"{tree.video_id}:agg:{node_id}",
            schema=schema,
        )
        node = tree.node(node_id)
        record.node_id = node_id
        record.video_id = tree.video_id
        record.start_s = node.start_s
        record.end_s = node.end_s
        return record

    result = AnnotationRunResult()
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = {pool.submit(one, nid): nid for nid in todo}
        for future, nid in futures.items():
            try:
                record = future.result()
            except (SchemaViolation, BackendError, MissingPlaceholder) as exc:
                logger.warning("annotation failed for %s node %d: %s", tree.video_id, nid, exc)
                result.failures.append((nid, str(exc)))
                continue
            result.records.append(record)
            if on_record is not None:
                on_record(record)
    result.records.sort(key=lambda r: r.node_id)
    result.failures.sort()
    return result
