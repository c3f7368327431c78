"""Observation sources, fixed-size chunking, and the query-agnostic perception step.

Stream time is plain float seconds measured from stream start; integer-second
inputs stay exact (IEEE doubles represent integers exactly far beyond 10^6).
Chunks partition the event sequence: every ``frames_per_chunk`` consecutive
events form one chunk, the final chunk keeps the remainder. Chunk spans are
contiguous half-open intervals: a chunk ends where the next one's first event
starts, and the last chunk ends one frame period after its last event.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Protocol

from .config import SourceSpec
from .errors import (
    BackendUnavailable,
    EmptyStream,
    GatewayError,
    MalformedTimestamp,
    MissingSource,
    StageDisabled,
)
from .gateway import ImagePart, ModelGateway, ModelRequest, TemplateId, TextPart

StreamTime = float


@dataclass(frozen=True)
class FrameRef:
    timestamp: StreamTime
    locator: str


@dataclass(frozen=True)
class TextEvent:
    timestamp: StreamTime
    text: str
    tags: tuple[str, ...] = ()


@dataclass(frozen=True)
class Chunk:
    index: int
    span: tuple[StreamTime, StreamTime]
    payload: tuple  # all FrameRef or all TextEvent
    source_id: str

    @property
    def is_text(self) -> bool:
        return bool(self.payload) and isinstance(self.payload[0], TextEvent)

    @property
    def duration(self) -> StreamTime:
        return self.span[1] - self.span[0]


@dataclass(frozen=True)
class ObjectRecord:
    label: str
    bbox: tuple[float, float, float, float]  # (x, y, w, h), normalized
    confidence: float
    frame_timestamp: StreamTime

    def __post_init__(self):
        x, y, w, h = self.bbox
        if not (0 <= x and 0 <= y and x + w <= 1 + 1e-9 and y + h <= 1 + 1e-9
                and w >= 0 and h >= 0):
            raise ValueError(f"bbox out of normalized range: {self.bbox}")
        if not 0 <= self.confidence <= 1:
            raise ValueError(f"confidence out of [0,1]: {self.confidence}")


@dataclass
class PerceptState:
    """Structured, query-agnostic record produced from one chunk."""

    chunk_index: int
    span: tuple[StreamTime, StreamTime]
    caption: str | None = None
    objects: list[ObjectRecord] = field(default_factory=list)
    scene_triples: list[tuple[str, str, str]] = field(default_factory=list)
    frame_refs: list[FrameRef] = field(default_factory=list)

    def __post_init__(self):
        if self.caption is None and not self.objects and not self.frame_refs:
            raise ValueError("a percept must carry a caption, objects, or frames")


# --- sources ---


class StreamSource(Protocol):
    def __iter__(self) -> Iterator[Chunk]: ...


def _chunk_events(events: list, frames_per_chunk: int, fps: float,
                  source_id: str) -> list[Chunk]:
    """Partition time-sorted events into contiguous chunks."""
    if not events:
        raise EmptyStream(f"source {source_id!r} yielded zero events")
    events = sorted(events, key=lambda e: e.timestamp)
    groups = [events[i:i + frames_per_chunk]
              for i in range(0, len(events), frames_per_chunk)]
    chunks: list[Chunk] = []
    start = groups[0][0].timestamp
    for idx, group in enumerate(groups):
        if idx + 1 < len(groups):
            end = groups[idx + 1][0].timestamp
        else:
            end = group[-1].timestamp + 1.0 / fps
        if not start < end:
            raise MalformedTimestamp(
                f"degenerate chunk span [{start}, {end}) in source {source_id!r}"
            )
        chunks.append(Chunk(index=idx, span=(start, end), payload=tuple(group),
                            source_id=source_id))
        start = end
    return chunks


class _ListSource:
    """Single-consumer source over a pre-chunked event list."""

    def __init__(self, chunks: list[Chunk]):
        self._chunks = chunks
        self._consumed = False

    @property
    def chunk_count(self) -> int:
        return len(self._chunks)

    def __iter__(self) -> Iterator[Chunk]:
        if self._consumed:
            raise RuntimeError("stream sources are single-consumer")
        self._consumed = True
        return iter(self._chunks)


def _parse_frame_dir(path: Path) -> list[FrameRef]:
    frames = []
    for entry in sorted(path.iterdir()):
        if entry.suffix.lower() not in (".jpg", ".jpeg", ".png"):
            continue
        try:
            ts = float(entry.stem)
        except ValueError:
            raise MalformedTimestamp(f"frame name is not a timestamp: {entry.name}")
        if ts < 0:
            raise MalformedTimestamp(f"negative frame timestamp: {entry.name}")
        frames.append(FrameRef(timestamp=ts, locator=str(entry)))
    return frames


def _parse_caption_file(path: Path) -> list[TextEvent]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                ts = float(record["t"])
                text = str(record["text"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise MalformedTimestamp(f"{path.name}:{lineno}: unparseable event line")
            if ts < 0:
                raise MalformedTimestamp(f"{path.name}:{lineno}: negative timestamp")
            events.append(TextEvent(timestamp=ts, text=text,
                                    tags=tuple(record.get("tags", ()))))
    return events


def parse_script(document: dict) -> tuple[int, float, list[TextEvent]]:
    """Validate a synthetic script document: {"seed", "fps", "events": [...]}."""
    try:
        seed = int(document.get("seed", 0))
        fps = float(document.get("fps", 1))
        raw_events = document["events"]
    except (KeyError, TypeError, ValueError):
        raise MalformedTimestamp("synthetic script missing seed/fps/events")
    events = []
    for i, raw in enumerate(raw_events):
        try:
            events.append(TextEvent(timestamp=float(raw["t"]), text=str(raw["text"]),
                                    tags=tuple(raw.get("tags", ()))))
        except (KeyError, TypeError, ValueError):
            raise MalformedTimestamp(f"synthetic script event #{i} unparseable")
        if events[-1].timestamp < 0:
            raise MalformedTimestamp(f"synthetic script event #{i}: negative timestamp")
    return seed, fps, events


def open_source(spec: SourceSpec, frames_per_chunk: int, fps: float) -> StreamSource:
    """Open a chunked observation source.

    For synthetic scripts the script's own fps wins over the argument, since
    the script is self-describing.
    """
    path = Path(spec.path)
    if spec.kind == "frames":
        if not path.is_dir():
            raise MissingSource(f"frame directory not found: {path}")
        events: list = _parse_frame_dir(path)
    elif spec.kind == "captions":
        if not path.is_file():
            raise MissingSource(f"caption file not found: {path}")
        events = _parse_caption_file(path)
    elif spec.kind == "script":
        if not path.is_file():
            raise MissingSource(f"synthetic script not found: {path}")
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            raise MalformedTimestamp(f"synthetic script is not valid JSON: {path}")
        _, fps, events = parse_script(document)
    else:
        raise MissingSource(f"unknown source kind {spec.kind!r}")
    return _ListSource(_chunk_events(events, frames_per_chunk, fps, spec.source_id))


# --- perception ---

# Pairwise spatial relation rules over normalized bboxes: overlap wins when
# IoU > 0.1; otherwise the dominant center offset axis picks the relation
# (image coordinates: y grows downward, so smaller y means "above").
IOU_OVERLAP_THRESHOLD = 0.1


def bbox_iou(a: tuple[float, float, float, float],
             b: tuple[float, float, float, float]) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def spatial_relation(a: tuple[float, float, float, float],
                     b: tuple[float, float, float, float]) -> str:
    if bbox_iou(a, b) > IOU_OVERLAP_THRESHOLD:
        return "overlaps"
    acx, acy = a[0] + a[2] / 2, a[1] + a[3] / 2
    bcx, bcy = b[0] + b[2] / 2, b[1] + b[3] / 2
    dx, dy = bcx - acx, bcy - acy
    if abs(dx) >= abs(dy):
        return "left_of" if dx > 0 else "right_of"
    return "above" if dy > 0 else "below"


def scene_triples_from_objects(objects: list[ObjectRecord]) -> list[tuple[str, str, str]]:
    """One triple per object pair in detection order (i < j)."""
    triples = []
    for i in range(len(objects)):
        for j in range(i + 1, len(objects)):
            a, b = objects[i], objects[j]
            triples.append((a.label, spatial_relation(a.bbox, b.bbox), b.label))
    return triples


class Captioner(Protocol):
    def caption(self, chunk: Chunk) -> str: ...


class GatewayCaptioner:
    """Sends the captioning prompt with the chunk's content as user parts."""

    def __init__(self, gateway: ModelGateway):
        self.gateway = gateway

    def caption(self, chunk: Chunk) -> str:
        parts: list = []
        if chunk.is_text:
            for event in chunk.payload:
                parts.append(TextPart(event.text))
        else:
            for frame in chunk.payload:
                parts.append(ImagePart(frame.locator))
        request = ModelRequest(TemplateId.CAPTIONING, tuple(parts))
        try:
            return self.gateway.complete(request).text
        except GatewayError as exc:
            raise BackendUnavailable(f"captioner gateway failed: {exc}") from exc


class JoinCaptioner:
    """Caption for text-event chunks: the events themselves, newline-joined.

    No model in the loop; used by synthetic and caption-file sources where the
    events already are textual descriptions of the scene.
    """

    def caption(self, chunk: Chunk) -> str:
        if not chunk.is_text:
            raise StageDisabled("join captioner only applies to text-event chunks")
        return "\n".join(event.text for event in chunk.payload)


class ObjectDetector(Protocol):
    def detect(self, chunk: Chunk) -> list[ObjectRecord]: ...


class TagObjectDetector:
    """Reads detections from event tags of the form ``obj:label@x,y,w,h[:conf]``.

    Gives synthetic scripts a deterministic object channel without any model.
    """

    PREFIX = "obj:"

    def detect(self, chunk: Chunk) -> list[ObjectRecord]:
        records = []
        if not chunk.is_text:
            return records
        for event in chunk.payload:
            for tag in event.tags:
                if not tag.startswith(self.PREFIX):
                    continue
                body = tag[len(self.PREFIX):]
                try:
                    label, rest = body.split("@", 1)
                    coord_part, _, conf_part = rest.partition(":")
                    x, y, w, h = (float(v) for v in coord_part.split(","))
                    conf = float(conf_part) if conf_part else 1.0
                except ValueError:
                    raise MalformedTimestamp(f"unparseable object tag {tag!r}")
                records.append(ObjectRecord(label=label, bbox=(x, y, w, h),
                                            confidence=conf,
                                            frame_timestamp=event.timestamp))
        return records


class DetectionsFileDetector:
    """Reads per-frame detections from a sidecar JSON keyed by frame basename.

    Stands in for a wire-served object detector in desk-scale runs; the file
    shape mirrors detector output: label, normalized bbox, confidence.
    """

    def __init__(self, path: str | Path):
        p = Path(path)
        if not p.is_file():
            raise MissingSource(f"detections file not found: {p}")
        self.by_frame: dict[str, list] = json.loads(p.read_text(encoding="utf-8"))

    def detect(self, chunk: Chunk) -> list[ObjectRecord]:
        records = []
        if chunk.is_text:
            return records
        for frame in chunk.payload:
            for det in self.by_frame.get(Path(frame.locator).name, []):
                records.append(
                    ObjectRecord(
                        label=str(det["label"]),
                        bbox=tuple(float(v) for v in det["bbox"]),
                        confidence=float(det.get("confidence", 1.0)),
                        frame_timestamp=frame.timestamp,
                    )
                )
        return records


@dataclass
class PerceptionPipeline:
    """Stage set derived from the enabled memory modalities.

    No stage ever sees query text: perception is strictly query-agnostic, and
    the stage interfaces (caption(chunk), detect(chunk)) enforce it.
    """

    captioner: Captioner | None = None
    detector: ObjectDetector | None = None
    keep_frames: bool = False

    def validate_for(self, modalities: list[str]) -> None:
        if "text" in modalities and self.captioner is None:
            raise StageDisabled("text modality requires a captioner stage")
        if "object" in modalities and self.detector is None:
            raise StageDisabled("object modality requires a detector stage")


def perceive(chunk: Chunk, pipeline: PerceptionPipeline) -> PerceptState:
    """Run the enabled perception stages over one chunk.

    Deterministic given deterministic stage backends; detector output feeds
    the rule-based scene-triple table.
    """
    caption = pipeline.captioner.caption(chunk) if pipeline.captioner else None
    objects: list[ObjectRecord] = []
    triples: list[tuple[str, str, str]] = []
    if pipeline.detector is not None:
        objects = pipeline.detector.detect(chunk)
        triples = scene_triples_from_objects(objects)
    frame_refs = [f for f in chunk.payload if isinstance(f, FrameRef)] if pipeline.keep_frames else []
    return PerceptState(
        chunk_index=chunk.index,
        span=chunk.span,
        caption=caption,
        objects=objects,
        scene_triples=triples,
        frame_refs=frame_refs,
    )
