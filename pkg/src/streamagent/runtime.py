"""The session event loop: ingest, retain, admit, trigger, answer, force-resolve.

Per committed chunk the loop perceives and retains one snapshot, admits every
query that has arrived by the chunk's end, and runs exactly one trigger
decision per pending query. A Respond decision immediately produces a grounded
answer stamped at the chunk's end time. Queries whose trigger never fires are
force-answered at stream end and flagged, so the evaluator always sees exactly
one answer per admitted query.

Transcripts are replay-deterministic: with the same config, sources, and
scripted gateway, two runs serialize byte-identical JSON Lines. Wall-clock
times are recorded only in real-time mode (null otherwise) to keep that true.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Protocol

from .config import SessionConfig, SourceSpec
from .errors import EmptyStream, GatewayError, SchemaViolation, StageDisabled
from .evidence import EvidenceSet, Query, identify, render_percept
from .gateway import ModelGateway, ModelRequest, TemplateId, TextPart
from .ingestion import (
    DetectionsFileDetector,
    GatewayCaptioner,
    JoinCaptioner,
    PerceptState,
    PerceptionPipeline,
    StreamSource,
    StreamTime,
    TagObjectDetector,
    perceive,
)
from .memory import (
    EmbeddingBackend,
    HashEmbedder,
    MemoryBank,
    MemorySnapshot,
    save_memory,
)
from .triggers import TriggerAction, TriggerDecision, TriggerStrategy, run_trigger

TRANSCRIPT_SCHEMA_VERSION = 1


class QueryState(str, Enum):
    PENDING = "pending"
    ANSWERED = "answered"
    FORCED_AT_END = "forced_at_end"


@dataclass
class PendingQuery:
    query: Query
    admitted_chunk: int
    decisions: list[TriggerDecision] = field(default_factory=list)
    state: QueryState = QueryState.PENDING


@dataclass(frozen=True)
class AnswerRecord:
    query_id: str
    responded_at: StreamTime
    answer_label: str
    grounding: EvidenceSet
    forced: bool = False
    parse_failure: bool = False


@dataclass(frozen=True)
class Event:
    seq: int
    type: str
    t: StreamTime
    wall_ms: int | None
    payload: dict

    def to_json_obj(self) -> dict:
        obj = {"seq": self.seq, "type": self.type, "t": self.t, "wall_ms": self.wall_ms}
        obj.update(self.payload)
        return obj


class Clock(Protocol):
    def now_ms(self) -> int | None: ...


class SimulatedClock:
    """Benchmark clock: no wall time, so transcripts replay byte-identically."""

    def now_ms(self) -> int | None:
        return None


class WallClock:
    def now_ms(self) -> int | None:
        return int(time.time() * 1000)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class SessionTranscript:
    """Append-only event log; the evaluator's sole input."""

    def __init__(self, session_id: str, config: dict,
                 clock: Clock | None = None,
                 subscriber: Callable[[Event], None] | None = None):
        self.session_id = session_id
        self.config = config
        self.events: list[Event] = []
        self._clock = clock or SimulatedClock()
        self._subscriber = subscriber

    def append(self, event_type: str, t: StreamTime, payload: dict) -> Event:
        event = Event(seq=len(self.events), type=event_type, t=t,
                      wall_ms=self._clock.now_ms(), payload=payload)
        self.events.append(event)
        if self._subscriber is not None:
            self._subscriber(event)
        return event

    def header(self) -> dict:
        return {
            "type": "session_header",
            "schema_version": TRANSCRIPT_SCHEMA_VERSION,
            "session_id": self.session_id,
            "config": self.config,
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(canonical_json(self.header()) + "\n")
            for event in self.events:
                fh.write(canonical_json(event.to_json_obj()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SessionTranscript":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise SchemaViolation("transcript file is empty")
        header = json.loads(lines[0])
        if header.get("type") != "session_header":
            raise SchemaViolation("transcript lacks a session_header line")
        if header.get("schema_version") != TRANSCRIPT_SCHEMA_VERSION:
            raise SchemaViolation(
                f"transcript schema version {header.get('schema_version')} not supported"
            )
        transcript = cls(header["session_id"], header["config"])
        for line in lines[1:]:
            raw = json.loads(line)
            payload = {k: v for k, v in raw.items()
                       if k not in ("seq", "type", "t", "wall_ms")}
            transcript.events.append(Event(seq=raw["seq"], type=raw["type"],
                                           t=raw["t"], wall_ms=raw["wall_ms"],
                                           payload=payload))
        return transcript

    def events_of(self, event_type: str) -> list[Event]:
        return [e for e in self.events if e.type == event_type]

    def answers(self) -> list[dict]:
        return [dict(e.payload, t=e.t) for e in self.events_of("answered")]


# --- query feeds ---


class QueryFeed(Protocol):
    def poll(self, up_to: StreamTime) -> list[Query]: ...

    def drain(self) -> list[Query]: ...


class ListQueryFeed:
    """Static feed over a known query list, delivered in arrival order."""

    def __init__(self, queries: Iterable[Query]):
        self._queries = sorted(queries, key=lambda q: (q.arrival_time, q.query_id))
        self._cursor = 0

    def poll(self, up_to: StreamTime) -> list[Query]:
        out = []
        while self._cursor < len(self._queries) and \
                self._queries[self._cursor].arrival_time <= up_to:
            out.append(self._queries[self._cursor])
            self._cursor += 1
        return out

    def drain(self) -> list[Query]:
        out = self._queries[self._cursor:]
        self._cursor = len(self._queries)
        return list(out)


class QueueQueryFeed:
    """Thread-safe feed for live sessions; submissions land at the next chunk."""

    def __init__(self):
        self._pending: list[Query] = []
        self._lock = threading.Lock()
        self._counter = 0

    def submit(self, text: str, arrival_time: StreamTime,
               options: tuple[tuple[str, str], ...] | None = None,
               query_id: str | None = None) -> Query:
        with self._lock:
            if query_id is None:
                query_id = f"live-{self._counter}"
            self._counter += 1
            query = Query(query_id=query_id, text=text, arrival_time=arrival_time,
                          options=options)
            self._pending.append(query)
            return query

    def poll(self, up_to: StreamTime) -> list[Query]:
        with self._lock:
            ready = [q for q in self._pending if q.arrival_time <= up_to]
            self._pending = [q for q in self._pending if q.arrival_time > up_to]
        return sorted(ready, key=lambda q: (q.arrival_time, q.query_id))

    def drain(self) -> list[Query]:
        with self._lock:
            out, self._pending = self._pending, []
        return sorted(out, key=lambda q: (q.arrival_time, q.query_id))


# --- answer generation ---

ANSWER_LABEL_RE = re.compile(r"\b([A-D])\b")


def build_answer_parts(query: Query, evidence: EvidenceSet,
                       percept: PerceptState) -> tuple[TextPart, ...]:
    context = evidence.rendered_context or "(no memory entries)"
    lines = [
        f"Memory context:\n{context}",
        f"Current observation:\n{render_percept(percept)}",
        f"Question: {query.text}",
    ]
    if query.options:
        option_lines = "\n".join(f"{label}. {text}" for label, text in query.options)
        lines.append(f"Options:\n{option_lines}")
    return (TextPart("\n\n".join(lines)),)


def generate_answer(query: Query, evidence: EvidenceSet, percept: PerceptState,
                    gateway: ModelGateway, responded_at: StreamTime,
                    fallback_label: str = "A", forced: bool = False) -> AnswerRecord:
    """Grounded answer at trigger time; answers do see the candidate options.

    Label extraction takes the first standalone A-D in the output. A missing
    label (or a dead gateway on the forced path) falls back to the configured
    label with the parse-failure flag set; a query is never dropped.
    """
    parts = build_answer_parts(query, evidence, percept)
    request = ModelRequest(TemplateId.REASONING, parts)
    try:
        text = gateway.complete(request).text
    except GatewayError:
        text = ""
    if query.options is None:
        label = text.strip()
        parse_failure = not label
        if parse_failure:
            label = fallback_label
    else:
        match = ANSWER_LABEL_RE.search(text)
        parse_failure = match is None
        label = match.group(1) if match else fallback_label
    return AnswerRecord(
        query_id=query.query_id,
        responded_at=responded_at,
        answer_label=label,
        grounding=evidence,
        forced=forced,
        parse_failure=parse_failure,
    )


# --- session assembly ---


def build_embedder(config: SessionConfig) -> HashEmbedder:
    return HashEmbedder(dim=config.embedding_dim, seed=config.seed)


def build_pipeline(config: SessionConfig, gateway: ModelGateway,
                   source_spec: SourceSpec | None = None) -> PerceptionPipeline:
    captioner = None
    detector = None
    if "text" in config.modalities:
        if config.captioner == "join":
            captioner = JoinCaptioner()
        else:
            captioner = GatewayCaptioner(gateway)
    if "object" in config.modalities:
        if source_spec is not None and source_spec.kind == "frames":
            detector = DetectionsFileDetector(Path(source_spec.path) / "objects.json")
        else:
            detector = TagObjectDetector()
    pipeline = PerceptionPipeline(
        captioner=captioner,
        detector=detector,
        keep_frames="vision" in config.modalities,
    )
    pipeline.validate_for(list(config.modalities))
    if "vision" in config.modalities and source_spec is not None \
            and source_spec.kind != "frames":
        raise StageDisabled("vision memory requires a frame source")
    return pipeline


def derive_session_id(config: SessionConfig, extra: str = "") -> str:
    digest = hashlib.sha256(
        (canonical_json(config.canonical()) + "|" + extra).encode("utf-8")
    ).hexdigest()
    return digest[:12]


class _SessionDriver:
    """Shared per-observation logic between live runs and memory replays."""

    def __init__(self, config: SessionConfig, gateway: ModelGateway,
                 bank: MemoryBank, embedder: EmbeddingBackend,
                 transcript: SessionTranscript, query_feed: QueryFeed):
        self.config = config
        self.gateway = gateway
        self.bank = bank
        self.embedder = embedder
        self.transcript = transcript
        self.query_feed = query_feed
        self.pending: list[PendingQuery] = []
        self.chunk_count = 0
        self.stream_end: StreamTime = 0.0
        self.last_percept: PerceptState | None = None
        self.strategy = TriggerStrategy(config.strategy)

    def _admit(self, t: StreamTime, chunk_index: int, queries: list[Query]) -> None:
        for query in queries:
            self.pending.append(PendingQuery(query=query, admitted_chunk=chunk_index))
            self.transcript.append("query_admitted", t, {
                "query_id": query.query_id,
                "text": query.text,
                "arrival_time": query.arrival_time,
                "admitted_chunk": chunk_index,
            })

    def _answer(self, pq: PendingQuery, evidence: EvidenceSet,
                percept: PerceptState, t: StreamTime, forced: bool) -> None:
        record = generate_answer(pq.query, evidence, percept, self.gateway,
                                 responded_at=t,
                                 fallback_label=self.config.fallback_label,
                                 forced=forced)
        pq.state = QueryState.FORCED_AT_END if forced else QueryState.ANSWERED
        self.transcript.append("answered", t, {
            "query_id": pq.query.query_id,
            "answer_label": record.answer_label,
            "responded_at": record.responded_at,
            "forced": record.forced,
            "parse_failure": record.parse_failure,
            "grounding": {
                "assembled_at": evidence.assembled_at,
                "items": [[h.snapshot_id, h.score, h.modality] for h in evidence.items],
            },
        })

    def on_observation(self, percept: PerceptState, snapshot_id: int,
                       event_count: int) -> None:
        t = percept.span[1]
        self.transcript.append("chunk_committed", t, {
            "chunk_index": percept.chunk_index,
            "span": list(percept.span),
            "snapshot_id": snapshot_id,
            "caption": percept.caption,
            "event_count": event_count,
        })
        self._admit(t, percept.chunk_index, self.query_feed.poll(t))
        for pq in self.pending:
            if pq.state is not QueryState.PENDING:
                continue
            evidence = identify(self.bank, pq.query, self.config.k, self.embedder)
            decision = run_trigger(self.strategy, pq.query, evidence, percept,
                                   self.gateway)
            pq.decisions.append(decision)
            self.transcript.append("trigger_decided", t, {
                "query_id": pq.query.query_id,
                "chunk_index": percept.chunk_index,
                "strategy": decision.strategy.value,
                "action": decision.action.value,
                "signals": list(decision.parsed_signals),
                "raw_outputs": list(decision.raw_model_outputs),
                "evidence_ids": [h.snapshot_id for h in evidence.items],
                "notes": list(decision.notes),
            })
            if decision.action is TriggerAction.RESPOND:
                self._answer(pq, evidence, percept, t, forced=False)
        self.chunk_count += 1
        self.stream_end = t
        self.last_percept = percept

    def finish(self) -> None:
        """Force-resolve every leftover query at stream end and close the log."""
        t = self.stream_end
        final_chunk = self.chunk_count - 1
        self._admit(t, final_chunk, self.query_feed.drain())
        forced = 0
        for pq in self.pending:
            if pq.state is not QueryState.PENDING:
                continue
            evidence = identify(self.bank, pq.query, self.config.k, self.embedder)
            self._answer(pq, evidence, self.last_percept, t, forced=True)
            forced += 1
        self.transcript.append("stream_ended", t, {
            "chunk_count": self.chunk_count,
            "forced_count": forced,
        })


def run_session(config: SessionConfig, source: StreamSource, query_feed: QueryFeed,
                gateway: ModelGateway, *,
                bank: MemoryBank | None = None,
                pipeline: PerceptionPipeline | None = None,
                embedder: EmbeddingBackend | None = None,
                clock: Clock | None = None,
                subscriber: Callable[[Event], None] | None = None,
                session_id: str | None = None,
                memory_path: str | Path | None = None) -> SessionTranscript:
    """Drive one full session over a chunked source; returns the transcript.

    Gateway failures inside trigger decisions are absorbed (fail-closed Defer);
    source and configuration errors propagate.
    """
    embedder = embedder or build_embedder(config)
    bank = bank or MemoryBank(list(config.modalities), dim=embedder.dim)
    pipeline = pipeline or build_pipeline(config, gateway)
    transcript = SessionTranscript(
        session_id=session_id or derive_session_id(config),
        config=config.canonical(),
        clock=clock,
        subscriber=subscriber,
    )
    driver = _SessionDriver(config, gateway, bank, embedder, transcript, query_feed)
    for chunk in source:
        percept = perceive(chunk, pipeline)
        snapshot_id = bank.retain(percept, embedder)
        driver.on_observation(percept, snapshot_id, event_count=len(chunk.payload))
    if driver.chunk_count == 0:
        raise EmptyStream("source produced no chunks")
    driver.finish()
    if memory_path is not None:
        save_memory(bank, memory_path, backend_id=embedder.backend_id)
    return transcript


def percept_from_snapshot(snapshot: MemorySnapshot) -> PerceptState:
    return PerceptState(
        chunk_index=snapshot.snapshot_id,
        span=snapshot.time_span,
        caption=snapshot.caption,
        objects=list(snapshot.objects or []),
        scene_triples=list(snapshot.scene_triples or []),
        frame_refs=list(snapshot.frame_refs or []),
    )


def replay_session(config: SessionConfig, snapshots: list[MemorySnapshot],
                   query_feed: QueryFeed, gateway: ModelGateway, *,
                   embedder: EmbeddingBackend | None = None,
                   clock: Clock | None = None,
                   session_id: str | None = None) -> SessionTranscript:
    """Re-run admission/trigger/answer over persisted memory (trigger ablations).

    Ingestion and embedding are skipped; stored snapshots are re-committed in
    order so each trigger decision sees exactly the memory prefix it would
    have seen live.
    """
    if not snapshots:
        raise EmptyStream("replay needs at least one snapshot")
    embedder = embedder or build_embedder(config)
    bank = MemoryBank(list(config.modalities), dim=embedder.dim)
    transcript = SessionTranscript(
        session_id=session_id or derive_session_id(config, extra="replay"),
        config=config.canonical(),
        clock=clock,
    )
    driver = _SessionDriver(config, gateway, bank, embedder, transcript, query_feed)
    for snapshot in snapshots:
        bank.append_snapshot(snapshot)
        percept = percept_from_snapshot(snapshot)
        driver.on_observation(percept, snapshot.snapshot_id,
                              event_count=len(snapshot.frame_refs or []))
    driver.finish()
    return transcript
