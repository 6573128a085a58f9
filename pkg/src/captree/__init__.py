"""Hierarchical video segmentation, caption trees, LLM aggregation, and
semantic resampling for building large action-annotation corpora."""

from .aggregate import (
    AnnotationRecord,
    PromptContext,
    VideoMetadata,
    annotate_video,
    build_prompt,
    self_refine,
    serialize_dfs,
)
from .backend import (
    Backend,
    BackendRequest,
    BackendResponse,
    MockBackend,
    RemoteBackend,
    backend_from_env,
)
from .captions import CaptionNode, TreeOfCaptions, caption_all, select_frames
from .config import PipelineConfig
from .errors import (
    BackendError,
    BackendRefusal,
    CaptreeError,
    CoverageGap,
    DimensionMismatch,
    EmptySequence,
    MalformedResponse,
    MissingPlaceholder,
    SchemaViolation,
    StageError,
    TooFewPoints,
    TransportError,
)
from .kmeans import SeededKMeans
from .pipeline import PipelineRunner, RunSummary, validate_artifacts
from .resample import ClusterModel, DedupTable, ResamplePlan, dedup, kmeans_texts, resample
from .segment import (
    ClusterStat,
    SegmentNode,
    SegmentTree,
    TemporalWardSegmenter,
    build_tree,
    mark_eligibility,
    ward_cost,
)
from .stats import StatsAccumulator, ngrams, report, word_count
from .windows import FrameEmbeddingSequence, SamplingConfig, aggregate, plan_windows

__version__ = "0.1.0"

__all__ = [
    "AnnotationRecord",
    "Backend",
    "BackendError",
    "BackendRefusal",
    "BackendRequest",
    "BackendResponse",
    "CaptionNode",
    "CaptreeError",
    "ClusterModel",
    "ClusterStat",
    "CoverageGap",
    "DedupTable",
    "DimensionMismatch",
    "EmptySequence",
    "FrameEmbeddingSequence",
    "MalformedResponse",
    "MissingPlaceholder",
    "MockBackend",
    "PipelineConfig",
    "PipelineRunner",
    "PromptContext",
    "RemoteBackend",
    "ResamplePlan",
    "RunSummary",
    "SamplingConfig",
    "SchemaViolation",
    "SeededKMeans",
    "SegmentNode",
    "SegmentTree",
    "StageError",
    "StatsAccumulator",
    "TemporalWardSegmenter",
    "TooFewPoints",
    "TransportError",
    "TreeOfCaptions",
    "VideoMetadata",
    "aggregate",
    "annotate_video",
    "backend_from_env",
    "build_prompt",
    "build_tree",
    "caption_all",
    "dedup",
    "kmeans_texts",
    "mark_eligibility",
    "ngrams",
    "plan_windows",
    "report",
    "resample",
    "select_frames",
    "self_refine",
    "serialize_dfs",
    "validate_artifacts",
    "ward_cost",
    "word_count",
]
