"""Streaming QA agent runtime and temporal-awareness benchmark harness.

An observation stream is ingested chunk by chunk into a query-agnostic,
append-only memory. Ad-hoc queries may arrive at any stream time; per chunk,
a trigger decides for each pending query whether enough evidence has been
retrieved to respond or whether to keep deferring. The evaluator scores both
answer correctness and how far each response lands outside its annotated
answering window.
"""

from .config import SessionConfig, SourceSpec, load_config
from .evidence import EvidenceSet, Query, identify, render_snapshot
from .evaluation import (
    EvalReport,
    QueryAnnotation,
    load_annotations,
    score_transcript,
    temporal_offset,
)
from .gateway import ModelGateway, ModelRequest, ModelResponse, build_gateway
from .ingestion import Chunk, FrameRef, ObjectRecord, PerceptState, TextEvent, open_source, perceive
from .memory import Embedding, HashEmbedder, MemoryBank, MemorySnapshot, ScoredSnapshot
from .runtime import (
    AnswerRecord,
    ListQueryFeed,
    QueueQueryFeed,
    SessionTranscript,
    generate_answer,
    replay_session,
    run_session,
)
from .triggers import (
    TriggerAction,
    TriggerDecision,
    TriggerStrategy,
    decide_adversarial,
    decide_binary,
    decide_cot,
)

__version__ = "0.1.0"

__all__ = [
    "AnswerRecord", "Chunk", "Embedding", "EvalReport", "EvidenceSet", "FrameRef",
    "HashEmbedder", "ListQueryFeed", "MemoryBank", "MemorySnapshot", "ModelGateway",
    "ModelRequest", "ModelResponse", "ObjectRecord", "PerceptState", "Query",
    "QueryAnnotation", "QueueQueryFeed", "ScoredSnapshot", "SessionConfig",
    "SessionTranscript", "SourceSpec", "TextEvent", "TriggerAction",
    "TriggerDecision", "TriggerStrategy", "build_gateway", "decide_adversarial",
    "decide_binary", "decide_cot", "generate_answer", "identify", "load_annotations",
    "load_config", "open_source", "perceive", "render_snapshot", "replay_session",
    "run_session", "score_transcript", "temporal_offset",
]
