"""Scoring: MCQ accuracy plus temporal awareness of response times.

The temporal offset of a response against its annotated answering window
[t_start, t_end] is zero inside the window, (responded_at - t_start) before it
(negative: premature), and (responded_at - t_end) after it (positive:
delayed). Aggregates report the signed mean, the population standard
deviation, and additionally the mean magnitude; forced end-of-stream answers
are included and surfaced via forced_count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import (
    DuplicateAnswer,
    InvalidWindow,
    MissingAnswer,
    MissingInput,
    SchemaViolation,
    UnknownVersion,
)
from .evidence import Query
from .ingestion import StreamTime
from .runtime import SessionTranscript

ANNOTATION_SCHEMA_VERSION = 1


class Temporality(str, Enum):
    PAST = "past"
    PRESENT = "present"
    FUTURE_PREDICTION = "future_prediction"
    FUTURE_OBSERVATION = "future_observation"

    @property
    def display(self) -> str:
        return {
            Temporality.PAST: "Past",
            Temporality.PRESENT: "Present",
            Temporality.FUTURE_PREDICTION: "Future-Prediction",
            Temporality.FUTURE_OBSERVATION: "Future-Observation",
        }[self]


class Complexity(str, Enum):
    PERCEPTION = "perception"
    REASONING = "reasoning"
    PLANNING = "planning"


CATEGORIES = (
    "contextual",
    "temporal",
    "commonsense",
    "memorization",
    "sequential",
    "recognition",
    "causal",
    "counterfactual",
)

OPTION_LABELS = ("A", "B", "C", "D")


@dataclass(frozen=True)
class QueryAnnotation:
    answer_label: str
    window: tuple[StreamTime, StreamTime]
    temporality: Temporality
    categories: tuple[str, ...]
    complexity: Complexity
    video_id: str = "default"

    def __post_init__(self):
        if self.window[0] > self.window[1]:
            raise InvalidWindow(f"window start {self.window[0]} > end {self.window[1]}")
        if not self.categories:
            raise SchemaViolation("categories must be non-empty")


@dataclass(frozen=True)
class EvalRecord:
    query_id: str
    correct: bool
    delta: float
    forced: bool
    temporality: Temporality
    categories: tuple[str, ...]
    responded_at: StreamTime
    parse_failure: bool = False


@dataclass
class EvalReport:
    n_queries: int
    overall_accuracy: float  # percent
    accuracy_by_temporality: dict[str, float | None]
    counts_by_temporality: dict[str, int]
    accuracy_by_category: dict[str, float | None]
    counts_by_category: dict[str, int]
    mean_delta: float
    std_delta: float
    mean_abs_delta: float
    forced_count: int
    parse_failure_count: int
    config: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "n_queries": self.n_queries,
            "overall_accuracy": self.overall_accuracy,
            "accuracy_by_temporality": self.accuracy_by_temporality,
            "counts_by_temporality": self.counts_by_temporality,
            "accuracy_by_category": self.accuracy_by_category,
            "counts_by_category": self.counts_by_category,
            "mean_delta": self.mean_delta,
            "std_delta": self.std_delta,
            "mean_abs_delta": self.mean_abs_delta,
            "forced_count": self.forced_count,
            "parse_failure_count": self.parse_failure_count,
            "config": self.config,
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), sort_keys=True, indent=2,
                       ensure_ascii=False) + "\n",
            encoding="utf-8",
        )


def temporal_offset(responded_at: StreamTime,
                    window: tuple[StreamTime, StreamTime]) -> float:
    """Signed seconds outside the answering window; zero inside it."""
    t_start, t_end = window
    if t_start > t_end:
        raise InvalidWindow(f"window start {t_start} > end {t_end}")
    if responded_at < t_start:
        return responded_at - t_start
    if responded_at > t_end:
        return responded_at - t_end
    return 0.0


# --- annotation loading ---


def _require(cond: bool, message: str, line: int) -> None:
    if not cond:
        raise SchemaViolation(message, line=line)


def load_annotations(path: str | Path) -> list[tuple[Query, QueryAnnotation]]:
    """Load and validate JSON Lines annotations; violations carry line numbers.

    An optional first line ``{"schema_version": n}`` pins the schema. Each
    record holds: video_id, query_id, t_query, question, options (A-D map),
    answer, window [s, s], temporality, categories, complexity. An answering
    window opening after the query time is only coherent for queries whose
    evidence arrives after they are asked, i.e. future_observation.
    """
    p = Path(path)
    if not p.is_file():
        raise MissingInput(f"annotations file not found: {p}")
    pairs: list[tuple[Query, QueryAnnotation]] = []
    seen_ids: set[str] = set()
    with open(p, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(f"invalid JSON: {exc}", line=lineno)
            if lineno == 1 and "schema_version" in raw and "query_id" not in raw:
                if raw["schema_version"] != ANNOTATION_SCHEMA_VERSION:
                    raise UnknownVersion(
                        f"annotation schema version {raw['schema_version']} not supported"
                    )
                continue
            pairs.append(_parse_annotation(raw, lineno, seen_ids))
    return pairs


def _parse_annotation(raw: dict, lineno: int,
                      seen_ids: set[str]) -> tuple[Query, QueryAnnotation]:
    for key in ("video_id", "query_id", "t_query", "question", "options",
                "answer", "window", "temporality", "categories", "complexity"):
        _require(key in raw, f"missing field {key!r}", lineno)
    query_id = str(raw["query_id"])
    _require(query_id not in seen_ids, f"duplicate query_id {query_id!r}", lineno)
    seen_ids.add(query_id)
    _require(isinstance(raw["t_query"], (int, float)) and raw["t_query"] >= 0,
             "t_query must be a non-negative number", lineno)
    options = raw["options"]
    _require(isinstance(options, dict) and options, "options must be a non-empty map",
             lineno)
    _require(all(label in OPTION_LABELS for label in options),
             "option labels must be A-D", lineno)
    _require(raw["answer"] in options, "answer must name one of the options", lineno)
    window = raw["window"]
    _require(isinstance(window, list) and len(window) == 2
             and all(isinstance(v, (int, float)) for v in window),
             "window must be [t_start, t_end]", lineno)
    _require(window[0] <= window[1], "window start exceeds end", lineno)
    try:
        temporality = Temporality(raw["temporality"])
    except ValueError:
        raise SchemaViolation(f"unknown temporality {raw['temporality']!r}", line=lineno)
    categories = raw["categories"]
    _require(isinstance(categories, list) and categories,
             "categories must be a non-empty list", lineno)
    _require(all(c in CATEGORIES for c in categories),
             f"categories must be drawn from {CATEGORIES}", lineno)
    try:
        complexity = Complexity(raw["complexity"])
    except ValueError:
        raise SchemaViolation(f"unknown complexity {raw['complexity']!r}", line=lineno)
    if temporality is not Temporality.FUTURE_OBSERVATION:
        _require(window[0] <= raw["t_query"],
                 "window opens after the query, which only future_observation permits",
                 lineno)
    ordered = tuple((label, str(options[label])) for label in OPTION_LABELS
                    if label in options)
    query = Query(query_id=query_id, text=str(raw["question"]),
                  arrival_time=float(raw["t_query"]), options=ordered)
    annotation = QueryAnnotation(
        answer_label=str(raw["answer"]),
        window=(float(window[0]), float(window[1])),
        temporality=temporality,
        categories=tuple(str(c) for c in categories),
        complexity=complexity,
        video_id=str(raw["video_id"]),
    )
    return query, annotation


# --- scoring ---


def records_from_transcript(transcript: SessionTranscript,
                            annotations: list[tuple[Query, QueryAnnotation]]
                            ) -> list[EvalRecord]:
    """Join answers out of a transcript with their annotations, one-to-one."""
    answers: dict[str, dict] = {}
    for payload in transcript.answers():
        qid = payload["query_id"]
        if qid in answers:
            raise DuplicateAnswer(f"query {qid} answered more than once")
        answers[qid] = payload
    records = []
    for query, annotation in annotations:
        if query.query_id not in answers:
            raise MissingAnswer(f"transcript lacks an answer for query {query.query_id}")
        payload = answers[query.query_id]
        records.append(
            EvalRecord(
                query_id=query.query_id,
                correct=payload["answer_label"] == annotation.answer_label,
                delta=temporal_offset(payload["responded_at"], annotation.window),
                forced=bool(payload["forced"]),
                temporality=annotation.temporality,
                categories=annotation.categories,
                responded_at=payload["responded_at"],
                parse_failure=bool(payload.get("parse_failure", False)),
            )
        )
    return records


def _pct(hits: int, total: int) -> float | None:
    return 100.0 * hits / total if total else None


def aggregate_records(records: list[EvalRecord], config: dict | None = None) -> EvalReport:
    n = len(records)
    correct = sum(r.correct for r in records)
    by_temp_hits = {t: 0 for t in Temporality}
    by_temp_n = {t: 0 for t in Temporality}
    by_cat_hits = {c: 0 for c in CATEGORIES}
    by_cat_n = {c: 0 for c in CATEGORIES}
    deltas = [r.delta for r in records]
    for r in records:
        by_temp_n[r.temporality] += 1
        by_temp_hits[r.temporality] += r.correct
        for c in r.categories:
            by_cat_n[c] += 1
            by_cat_hits[c] += r.correct
    mean = sum(deltas) / n if n else 0.0
    variance = sum((d - mean) ** 2 for d in deltas) / n if n else 0.0
    return EvalReport(
        n_queries=n,
        overall_accuracy=_pct(correct, n) if n else 0.0,
        accuracy_by_temporality={
            t.display: _pct(by_temp_hits[t], by_temp_n[t]) for t in Temporality
        },
        counts_by_temporality={t.display: by_temp_n[t] for t in Temporality},
        accuracy_by_category={
            c: _pct(by_cat_hits[c], by_cat_n[c]) for c in CATEGORIES
        },
        counts_by_category={c: by_cat_n[c] for c in CATEGORIES},
        mean_delta=mean,
        std_delta=math.sqrt(variance),
        mean_abs_delta=sum(abs(d) for d in deltas) / n if n else 0.0,
        forced_count=sum(r.forced for r in records),
        parse_failure_count=sum(r.parse_failure for r in records),
        config=config or {},
    )


def score_transcript(transcript: SessionTranscript,
                     annotations: list[tuple[Query, QueryAnnotation]],
                     config: dict | None = None) -> EvalReport:
    return aggregate_records(records_from_transcript(transcript, annotations),
                             config=config)


# --- report rendering ---

TABLE_COLUMNS = ("Overall", "Past", "Present", "Future-Prediction",
                 "Future-Observation", "Mean δ", "Std δ")


def _cell(value: float | None) -> str:
    return "-" if value is None else f"{value:.1f}"


def render_table(rows: list[tuple[str, EvalReport]], label_header: str = "Config") -> str:
    """Fixed-width accuracy/offset table: one row per configuration."""
    body = []
    for label, report in rows:
        body.append([
            label,
            _cell(report.overall_accuracy),
            _cell(report.accuracy_by_temporality["Past"]),
            _cell(report.accuracy_by_temporality["Present"]),
            _cell(report.accuracy_by_temporality["Future-Prediction"]),
            _cell(report.accuracy_by_temporality["Future-Observation"]),
            _cell(report.mean_delta),
            _cell(report.std_delta),
        ])
    headers = [label_header, *TABLE_COLUMNS]
    widths = [max(len(headers[i]), *(len(r[i]) for r in body)) if body else len(headers[i])
              for i in range(len(headers))]
    def fmt_row(cells):
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(widths[i + 1]) for i, c in enumerate(cells[1:])]
        return "  ".join([first, *rest]).rstrip()
    lines = [fmt_row(headers)]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend(fmt_row(r) for r in body)
    return "\n".join(lines) + "\n"


def category_csv(report: EvalReport) -> str:
    """Per-category accuracy in CSV form for radar-style plotting."""
    lines = ["category,accuracy"]
    for category in CATEGORIES:
        acc = report.accuracy_by_category[category]
        lines.append(f"{category},{'' if acc is None else f'{acc:.1f}'}")
    return "\n".join(lines) + "\n"
