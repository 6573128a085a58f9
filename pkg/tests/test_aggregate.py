"""Serialization, prompt construction, and the refinement protocol."""

import json
from pathlib import Path

import jsonschema
import pytest

from captree import (
    MissingPlaceholder,
    MockBackend,
    SchemaViolation,
    VideoMetadata,
    annotate_video,
    build_prompt,
    self_refine,
    serialize_dfs,
)
from captree.aggregate import (
    PromptContext,
    build_context,
    load_annotation_schema,
    load_prompt_template,
    load_refine_instruction,
    parse_annotation,
    refine_prompt,
)
from captree.backend import CountingBackend
from conftest import captioned, manual_tree

DATA = Path(__file__).parent / "data"


def golden_fixture():
    tree = manual_tree(
        "golden-video", (0, 20, [(0, 12, [(0, 5), (5, 12)]), (12, 20)]), frame_duration=1.0
    )
    texts = {
        (0, 20): "A cook roasts almonds and blends them into butter.",
        (0, 12): "Raw almonds are spread on a tray and roasted in an oven.",
        (0, 5): "A tray of raw almonds sits on a counter.",
        (5, 12): "The tray is placed into a preheated oven.",
        (12, 20): "The roasted almonds are poured into a blender and blended until smooth.",
    }
    toc = captioned(tree, text_for=lambda n: texts[(n.lo, n.hi)])
    current = next(n.id for n in tree.nodes.values() if (n.lo, n.hi) == (12, 20))
    meta = VideoMetadata(
        video_id="golden-video",
        title="Homemade Almond Butter",
        description="Roast, blend, and store almond butter with one simple tool.",
        asr_transcript="hey everyone today we are making almond butter from scratch",
        duration_s=20.0,
    )
    return toc, meta, current


# ---------------- serialize_dfs ----------------


def test_serialize_single_node():
    tree = manual_tree("v", (0, 5), frame_duration=1.0)
    toc = captioned(tree, text_for=lambda n: "A hand stirs.")
    assert serialize_dfs(toc, tree.root) == "# [0.0s – 5.0s]\nA hand stirs.\n"


def test_serialize_preorder_levels():
    tree = manual_tree("v", (0, 10, [(0, 6), (6, 10)]), frame_duration=1.0)
    toc = captioned(tree)
    out = serialize_dfs(toc, tree.root)
    lines = [l for l in out.splitlines() if l.startswith("#")]
    assert lines[0].startswith("# [0.0s – 10.0s]")
    assert lines[1].startswith("## [0.0s – 6.0s]")
    assert lines[2].startswith("## [6.0s – 10.0s]")


def test_serialize_depth_cut():
    tree = manual_tree("v", (0, 16, [(0, 8, [(0, 4), (4, 8)]), (8, 16)]), frame_duration=1.0)
    toc = captioned(tree)
    out = serialize_dfs(toc, tree.root, max_depth=1)
    assert "###" not in out
    assert "## [0.0s – 8.0s]" in out
    full = serialize_dfs(toc, tree.root)
    assert "### [0.0s – 4.0s]" in full


def test_serialize_skips_uncaptioned_but_visits_descendants():
    tree = manual_tree("v", (0, 10, [(0, 6), (6, 10)]), frame_duration=1.0)
    toc = captioned(tree)
    del toc.captions[tree.root]
    out = serialize_dfs(toc, tree.root)
    assert "# [0.0s – 10.0s]" not in out
    assert "## [0.0s – 6.0s]" in out


# ---------------- build_prompt ----------------


def test_prompt_golden_file():
    toc, meta, current = golden_fixture()
    prompt = build_prompt(build_context(toc, meta, current, global_depth=2))
    golden = (DATA / "golden_prompt.txt").read_text(encoding="utf-8")
    assert prompt == golden


def test_prompt_missing_metadata_renders_sentinel():
    toc, _, current = golden_fixture()
    meta = VideoMetadata(video_id="golden-video")
    prompt = build_prompt(build_context(toc, meta, current))
    assert "Title: N/A" in prompt
    assert "Description: N/A" in prompt
    assert "ASR transcript: N/A" in prompt


def test_prompt_time_substitution():
    toc, meta, current = golden_fixture()
    ctx = build_context(toc, meta, current)
    ctx.start_time, ctx.end_time = 12.0, 20.0
    prompt = build_prompt(ctx)
    assert "from 12.0 to 20.0 seconds" in prompt


def test_prompt_missing_placeholder():
    ctx = PromptContext(
        current_md=None,
        global_md="g",
        metadata_block="m",
        start_time=0.0,
        end_time=1.0,
        global_start_time=0.0,
        global_end_time=1.0,
    )
    with pytest.raises(MissingPlaceholder):
        build_prompt(ctx)


def test_template_keeps_all_placeholders():
    template = load_prompt_template()
    for name in (
        "video_metadata",
        "formatted_global_tree_of_captions",
        "formatted_current_tree_of_captions",
        "start_time",
        "end_time",
        "global_start_time",
        "global_end_time",
    ):
        assert "{" + name + "}" in template


def test_asr_truncation_budget():
    toc, meta, current = golden_fixture()
    meta.asr_transcript = "word " * 5000
    ctx = build_context(toc, meta, current, asr_char_budget=100)
    assert "[truncated]" in ctx.metadata_block
    assert len(ctx.metadata_block) < 400


# ---------------- parse/validate ----------------


def valid_body():
    return {
        "summary": {"brief": "A person stirs.", "detailed": "A person stirs a bowl slowly."},
        "action": {"brief": "stir the bowl", "detailed": "Stir the bowl.", "actor": "A person"},
    }


def test_parse_annotation_roundtrip():
    fields = parse_annotation(json.dumps(valid_body()))
    assert fields["action_brief"] == "stir the bowl"


def test_parse_annotation_missing_summary():
    body = valid_body()
    del body["summary"]
    with pytest.raises(SchemaViolation):
        parse_annotation(json.dumps(body))


def test_parse_annotation_empty_field():
    body = valid_body()
    body["action"]["actor"] = ""
    with pytest.raises(SchemaViolation):
        parse_annotation(json.dumps(body))


def test_parse_annotation_not_json():
    with pytest.raises(SchemaViolation):
        parse_annotation("sorry, I cannot help")


# ---------------- self_refine ----------------


class ScriptedBackend(MockBackend):
    """Returns queued texts for complete calls; falls back to the mock."""

    def __init__(self, scripted):
        super().__init__()
        self.scripted = list(scripted)
        self.prompts = []

    def _complete(self, payload):
        self.prompts.append(payload["prompt"])
        if self.scripted:
            return self.scripted.pop(0)
        return super()._complete(payload)


def test_self_refine_three_rounds_and_containment():
    backend = CountingBackend(MockBackend())
    record, responses = self_refine("base prompt", backend, rounds=3)
    assert backend.counts == {"complete": 3}
    assert record.rounds == 3
    assert len(responses) == 3
    # rebuild round prompts and check the previous response is contained
    sb2 = ScriptedBackend([])
    record2, responses2 = self_refine("base prompt", sb2, rounds=3)
    assert responses2 == responses
    assert sb2.prompts[0] == "base prompt"
    for k in (1, 2):
        assert responses2[k - 1] in sb2.prompts[k]
        assert sb2.prompts[k].startswith("base prompt")


def test_refine_instruction_appended_verbatim():
    instruction = load_refine_instruction()
    assert instruction.startswith("Now, carefully analyze, verify, and revise")
    prompt = refine_prompt("BASE", "DRAFT")
    assert prompt.rstrip("\n").endswith(instruction)
    assert "DRAFT" in prompt and prompt.startswith("BASE")


def test_self_refine_schema_retry_then_error():
    bad = "not json at all"
    backend = CountingBackend(ScriptedBackend([bad, bad]))
    with pytest.raises(SchemaViolation):
        self_refine("p", backend, rounds=3)
    assert backend.counts == {"complete": 2}  # one retry for round 1, then fail


def test_self_refine_retry_recovers():
    good = json.dumps(valid_body())
    backend = CountingBackend(ScriptedBackend(["garbage", good, good, good]))
    record, _ = self_refine("p", backend, rounds=3)
    assert backend.counts == {"complete": 4}  # 3 rounds + 1 retry
    assert record.summary_brief == "A person stirs."


def test_na_record_retained():
    na_body = {
        "summary": {"brief": "Intro screen.", "detailed": "A static intro screen."},
        "action": {"brief": "N/A", "detailed": "N/A", "actor": "N/A"},
    }
    text = json.dumps(na_body)
    backend = ScriptedBackend([text, text, text])
    record, _ = self_refine("p", backend, rounds=3)
    assert record.na_action is True
    assert record.action_brief == "N/A"


def test_records_validate_against_schema():
    toc, meta, _ = golden_fixture()
    result = annotate_video(toc, meta, MockBackend(), rounds=3)
    schema = load_annotation_schema()
    assert result.records
    for record in result.records:
        body = record.to_json_dict()
        jsonschema.validate({"summary": body["summary"], "action": body["action"]}, schema)


# ---------------- annotate_video ----------------


def test_duration_filter():
    # nodes of 2 s, 5 s and 9 s: only the last two are annotated
    tree = manual_tree("v", (0, 9, [(0, 2), (2, 9, [(2, 5), (5, 9)])]), frame_duration=1.0)
    # spans: 9s root, 2s, 7s, 3s, 4s -> eligible: 9, 7, 4
    toc = captioned(tree)
    meta = VideoMetadata(video_id="v")
    result = annotate_video(toc, meta, MockBackend(), rounds=3)
    durations = sorted(
        round(tree.node(r.node_id).duration_s) for r in result.records
    )
    assert durations == [4, 7, 9]
    assert not result.failures


def test_empty_eligible_set():
    tree = manual_tree("v", (0, 3, [(0, 2), (2, 3)]), frame_duration=1.0)
    toc = captioned(tree)
    result = annotate_video(toc, VideoMetadata(video_id="v"), MockBackend())
    assert result.records == [] and result.failures == []


class FailOnceBackend(MockBackend):
    def __init__(self, poison_prefix):
        super().__init__()
        self.poison_prefix = poison_prefix

    def call(self, req):
        if req.kind == "complete" and req.request_id.startswith(self.poison_prefix):
            return type(super().call(req))(
                request_id=req.request_id, result="broken {", token_count=1
            )
        return super().call(req)


def test_partial_results_with_failures():
    tree = manual_tree("v", (0, 20, [(0, 12, [(0, 5), (5, 12)]), (12, 20)]), frame_duration=1.0)
    toc = captioned(tree)
    eligible = sorted(n.id for n in tree.nodes.values() if n.annotation_eligible)
    poisoned = eligible[0]
    backend = FailOnceBackend(f"v:agg:{poisoned}")
    result = annotate_video(toc, VideoMetadata(video_id="v"), backend)
    assert len(result.records) == len(eligible) - 1
    assert [nid for nid, _ in result.failures] == [poisoned]


def test_node_order_independence():
    toc, meta, _ = golden_fixture()
    a = annotate_video(toc, meta, MockBackend(), max_workers=1)
    b = annotate_video(toc, meta, MockBackend(), max_workers=4)
    as_dicts = lambda res: [r.to_json_dict() for r in res.records]
    assert as_dicts(a) == as_dicts(b)


class EffortRecordingBackend(MockBackend):
    def __init__(self):
        super().__init__()
        self.efforts = []

    def _complete(self, payload):
        self.efforts.append(payload["reasoning_effort"])
        return super()._complete(payload)


def test_first_round_always_high_effort():
    backend = EffortRecordingBackend()
    self_refine("p", backend, rounds=3, reasoning_effort="low")
    assert backend.efforts == ["high", "low", "low"]
