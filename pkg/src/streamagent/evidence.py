"""Query-time evidence assembly: top-K retrieval plus prompt-context rendering.

The retrieved items stay score-ordered (that is the retrieval contract), while
the rendered context re-sorts them chronologically so the downstream model
reads a temporally coherent narrative.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import MissingModalityField
from .ingestion import PerceptState, StreamTime
from .memory import (
    EmbeddingBackend,
    MemoryBank,
    MemorySnapshot,
    ScoredSnapshot,
    object_lines,
    triple_lines,
)


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str
    arrival_time: StreamTime
    options: tuple[tuple[str, str], ...] | None = None  # ordered (label, text)
    annotations: object | None = None  # evaluation-only; never read on agent paths

    def __post_init__(self):
        if self.arrival_time < 0:
            raise ValueError("arrival_time must be non-negative")
        if self.options is not None:
            labels = [label for label, _ in self.options]
            if len(set(labels)) != len(labels):
                raise ValueError("duplicate option labels")
            for label in labels:
                if label not in ("A", "B", "C", "D"):
                    raise ValueError(f"option label {label!r} not in A-D")


@dataclass(frozen=True)
class EvidenceSet:
    query_id: str
    assembled_at: StreamTime
    items: tuple[ScoredSnapshot, ...]
    rendered_context: str


def fmt_seconds(value: StreamTime) -> str:
    """Stable second formatting: integers without a decimal point."""
    return str(int(value)) if value == int(value) else repr(float(value))


def _span_prefix(span: tuple[StreamTime, StreamTime]) -> str:
    return f"[t={fmt_seconds(span[0])}s–{fmt_seconds(span[1])}s]"


def render_snapshot(snapshot: MemorySnapshot, modalities: set[str] | frozenset[str]) -> str:
    """Deterministic textual form of one snapshot, time-prefixed.

    Caption goes verbatim on the prefix line; objects render one per line as
    label(confidence)@bbox, triples as "a —rel→ b", frames as bare locators.
    """
    for modality in modalities:
        populated = {
            "text": snapshot.caption is not None,
            "object": snapshot.objects is not None,
            "vision": snapshot.frame_refs is not None,
        }.get(modality, False)
        if not populated:
            raise MissingModalityField(
                f"snapshot {snapshot.snapshot_id} has no {modality} field"
            )
    head = _span_prefix(snapshot.time_span)
    if "text" in modalities and snapshot.caption:
        head = f"{head} {snapshot.caption}"
    lines = [head]
    if "object" in modalities:
        lines.extend(object_lines(snapshot.objects))
        lines.extend(triple_lines(snapshot.scene_triples or []))
    if "vision" in modalities:
        lines.extend(f.locator for f in snapshot.frame_refs)
    return "\n".join(lines)


def render_percept(percept: PerceptState) -> str:
    """Same line rules as render_snapshot, over the current (uncommitted) percept."""
    head = _span_prefix(percept.span)
    if percept.caption:
        head = f"{head} {percept.caption}"
    lines = [head]
    lines.extend(object_lines(percept.objects))
    lines.extend(triple_lines(percept.scene_triples))
    lines.extend(f.locator for f in percept.frame_refs)
    return "\n".join(lines)


def identify(bank: MemoryBank, query: Query, k: int,
             embedder: EmbeddingBackend) -> EvidenceSet:
    """Assemble the top-k evidence set for a query against committed memory.

    Retrieves per enabled embedding space, merges by score (max score wins for
    a snapshot found in both spaces), re-ranks by descending score with the
    earlier-snapshot tie-break, and truncates to k. An empty bank is valid and
    yields an empty evidence set.
    """
    if not query.text:
        raise ValueError("query text must be non-empty")
    best: dict[int, ScoredSnapshot] = {}
    query_embedding = embedder.embed(query.text)
    for space in bank.enabled_spaces():
        for hit in bank.search(query_embedding, k, space):
            cur = best.get(hit.snapshot_id)
            if cur is None or hit.score > cur.score:
                best[hit.snapshot_id] = hit
    ranked = sorted(best.values(), key=lambda h: (-h.score, h.snapshot_id))[:k]
    rendered = render_context(bank, ranked)
    return EvidenceSet(
        query_id=query.query_id,
        assembled_at=bank.frontier,
        items=tuple(ranked),
        rendered_context=rendered,
    )


def render_context(bank: MemoryBank, items: list[ScoredSnapshot]) -> str:
    """Chronological rendering of the retrieved snapshots."""
    chosen = sorted({h.snapshot_id for h in items})
    modalities = frozenset(bank.modalities)
    return "\n".join(
        render_snapshot(bank.snapshots[sid], modalities) for sid in chosen
    )
