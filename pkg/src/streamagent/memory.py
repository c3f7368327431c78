"""Append-only, temporally indexed, similarity-searchable snapshot store.

Two embedding spaces back retrieval: "text" (captions, plus object renderings
when object memory is enabled) and "vision" (frame references). Object memory
has no embedding field of its own; its content is folded into the text space
so the snapshot schema stays at two embedding slots. All stored embeddings are
unit-normalized at ingest, so cosine similarity reduces to a dot product.

Search is exact: a brute-force dot product over every stored vector, ranked by
descending score with ties broken by smaller snapshot id (earlier wins).
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import (
    EmbeddingDimMismatch,
    MalformedTimestamp,
    ModalityDisabled,
    OutOfOrderCommit,
)
from .ingestion import FrameRef, ObjectRecord, PerceptState, StreamTime

EMBEDDING_SPACES = ("text", "vision")


@dataclass(frozen=True)
class Embedding:
    values: tuple[float, ...]
    dim: int
    backend_id: str

    def __post_init__(self):
        if len(self.values) != self.dim:
            raise EmbeddingDimMismatch(
                f"embedding has {len(self.values)} values, declared dim {self.dim}"
            )
        norm = float(np.linalg.norm(self.values))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding is not unit-normalized (|v|={norm})")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


class EmbeddingBackend(Protocol):
    dim: int
    backend_id: str

    def embed(self, text: str) -> Embedding: ...


def _hash64(token: str, seed: int, salt: bytes) -> int:
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little") + salt
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


class HashEmbedder:
    """Deterministic test-scale embedder: seeded token hashing into sign buckets.

    Tokenizes on whitespace after lowercasing; each token adds +/-1 (sign from
    a second hash) into one of ``dim`` buckets; the result is L2-normalized.
    Identical token multisets map to identical embeddings, and everything is a
    pure function of (text, seed), stable across processes.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self.backend_id = f"hash64:d{dim}:s{seed}"

    def embed(self, text: str) -> Embedding:
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in text.lower().split():
            bucket = _hash64(token, self.seed, b"bucket") % self.dim
            sign = 1.0 if _hash64(token, self.seed, b"sign") & 1 == 0 else -1.0
            vec[bucket] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            # tokens may cancel within a bucket (or text may be empty); pin a
            # deterministic unit fallback rather than failing ingestion
            vec[0] = 1.0
        else:
            vec /= norm
        return Embedding(values=tuple(float(v) for v in vec), dim=self.dim,
                         backend_id=self.backend_id)


@dataclass(frozen=True)
class MemorySnapshot:
    snapshot_id: int
    time_span: tuple[StreamTime, StreamTime]
    caption: str | None
    objects: list[ObjectRecord] | None
    scene_triples: list[tuple[str, str, str]] | None
    frame_refs: list[FrameRef] | None
    text_embedding: Embedding | None
    vision_embedding: Embedding | None

    def embedding_for(self, space: str) -> Embedding | None:
        return self.text_embedding if space == "text" else self.vision_embedding


@dataclass(frozen=True)
class ScoredSnapshot:
    snapshot_id: int
    score: float
    modality: str


def object_lines(objects: list[ObjectRecord]) -> list[str]:
    return [
        f"{o.label}({o.confidence:.2f})@({o.bbox[0]:.2f},{o.bbox[1]:.2f},"
        f"{o.bbox[2]:.2f},{o.bbox[3]:.2f})"
        for o in objects
    ]


def triple_lines(triples: list[tuple[str, str, str]]) -> list[str]:
    return [f"{a} —{rel}→ {b}" for a, rel, b in triples]


def text_space_content(caption: str | None, objects: list[ObjectRecord] | None,
                       triples: list[tuple[str, str, str]] | None) -> str:
    lines: list[str] = []
    if caption:
        lines.append(caption)
    if objects:
        lines.extend(object_lines(objects))
    if triples:
        lines.extend(triple_lines(triples))
    return "\n".join(lines)


def vision_space_content(frame_refs: list[FrameRef]) -> str:
    return "\n".join(f.locator for f in frame_refs)


class MemoryBank:
    """One writer, many readers; snapshots are never mutated or deleted.

    Readers always observe a consistent prefix: the snapshot list and the
    per-space vector rows are appended under one lock, so a search sees every
    snapshot up to the latest commit and nothing partial.
    """

    def __init__(self, modalities: list[str], dim: int):
        self.modalities = tuple(modalities)
        self.dim = dim
        self.snapshots: list[MemorySnapshot] = []
        self._vectors: dict[str, list[np.ndarray]] = {
            space: [] for space in self.enabled_spaces()
        }
        self._lock = threading.Lock()

    def enabled_spaces(self) -> tuple[str, ...]:
        spaces = []
        if "text" in self.modalities or "object" in self.modalities:
            spaces.append("text")
        if "vision" in self.modalities:
            spaces.append("vision")
        return tuple(spaces)

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def frontier(self) -> StreamTime:
        """Stream time up to which memory is committed (0 when empty)."""
        with self._lock:
            return self.snapshots[-1].time_span[1] if self.snapshots else 0.0

    def retain(self, percept: PerceptState, embedder: EmbeddingBackend) -> int:
        """Commit one percept as the next snapshot, embedding enabled modalities."""
        if percept.chunk_index != len(self.snapshots):
            raise OutOfOrderCommit(
                f"percept for chunk {percept.chunk_index} but bank holds "
                f"{len(self.snapshots)} snapshots"
            )
        text_emb = None
        vision_emb = None
        if "text" in self._vectors:
            content = text_space_content(
                percept.caption if "text" in self.modalities else None,
                percept.objects if "object" in self.modalities else None,
                percept.scene_triples if "object" in self.modalities else None,
            )
            text_emb = embedder.embed(content)
        if "vision" in self._vectors:
            vision_emb = embedder.embed(vision_space_content(percept.frame_refs))
        snapshot = MemorySnapshot(
            snapshot_id=percept.chunk_index,
            time_span=percept.span,
            caption=percept.caption if "text" in self.modalities else None,
            objects=list(percept.objects) if "object" in self.modalities else None,
            scene_triples=list(percept.scene_triples) if "object" in self.modalities else None,
            frame_refs=list(percept.frame_refs) if "vision" in self.modalities else None,
            text_embedding=text_emb,
            vision_embedding=vision_emb,
        )
        self.append_snapshot(snapshot)
        return snapshot.snapshot_id

    def append_snapshot(self, snapshot: MemorySnapshot) -> None:
        """Low-level in-order append (also the reload path for replays)."""
        if snapshot.snapshot_id != len(self.snapshots):
            raise OutOfOrderCommit(
                f"snapshot id {snapshot.snapshot_id} does not continue the bank "
                f"({len(self.snapshots)} stored)"
            )
        rows = {}
        for space in self._vectors:
            emb = snapshot.embedding_for(space)
            if emb is None:
                raise ModalityDisabled(
                    f"snapshot {snapshot.snapshot_id} lacks the {space} embedding"
                )
            if emb.dim != self.dim:
                raise EmbeddingDimMismatch(
                    f"snapshot {snapshot.snapshot_id} {space} embedding has dim "
                    f"{emb.dim}, bank expects {self.dim}"
                )
            rows[space] = emb.as_array()
        with self._lock:
            for space, row in rows.items():
                self._vectors[space].append(row)
            self.snapshots.append(snapshot)

    def search(self, query_embedding: Embedding, k: int, modality: str) -> list[ScoredSnapshot]:
        """Exact top-k by cosine over every stored embedding in one space.

        The score of snapshot i is defined as the per-row dot product
        np.dot(v_i, q), computed independently per row rather than as one
        batched matrix product, so equal vectors always score bit-identically
        and the earlier-id tie-break is well defined against any brute-force
        reranker.
        """
        if modality not in self._vectors:
            raise ModalityDisabled(f"modality {modality!r} is not indexed in this bank")
        if k < 1:
            raise ValueError("k must be >= 1")
        if query_embedding.dim != self.dim:
            raise EmbeddingDimMismatch(
                f"query embedding dim {query_embedding.dim} != bank dim {self.dim}"
            )
        with self._lock:
            rows = list(self._vectors[modality])
        if not rows:
            return []
        query = query_embedding.as_array()
        scores = np.fromiter((row @ query for row in rows), dtype=np.float64,
                             count=len(rows))
        # stable argsort on negated scores keeps ascending-id order for ties
        order = np.argsort(-scores, kind="stable")[:k]
        return [ScoredSnapshot(int(i), float(scores[i]), modality) for i in order]

    def window(self, span: tuple[StreamTime, StreamTime]) -> list[MemorySnapshot]:
        """All snapshots whose half-open time span intersects the closed query span."""
        start, end = span
        if start > end:
            raise ValueError(f"window start {start} exceeds end {end}")
        with self._lock:
            return [
                s for s in self.snapshots
                if s.time_span[0] <= end and s.time_span[1] > start
            ]


# --- persistence (memory.jsonl) ---

MEMORY_SCHEMA_VERSION = 1


def _snapshot_to_dict(s: MemorySnapshot) -> dict:
    return {
        "snapshot_id": s.snapshot_id,
        "span": list(s.time_span),
        "caption": s.caption,
        "objects": None if s.objects is None else [
            {"label": o.label, "bbox": list(o.bbox), "confidence": o.confidence,
             "t": o.frame_timestamp}
            for o in s.objects
        ],
        "scene_triples": None if s.scene_triples is None else [list(t) for t in s.scene_triples],
        "frame_refs": None if s.frame_refs is None else [
            {"t": f.timestamp, "locator": f.locator} for f in s.frame_refs
        ],
        "text_embedding": None if s.text_embedding is None else list(s.text_embedding.values),
        "vision_embedding": None if s.vision_embedding is None else list(s.vision_embedding.values),
    }


def save_memory(bank: MemoryBank, path: str | Path, backend_id: str) -> None:
    header = {
        "type": "memory_header",
        "schema_version": MEMORY_SCHEMA_VERSION,
        "modalities": sorted(bank.modalities),
        "dim": bank.dim,
        "backend_id": backend_id,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True, ensure_ascii=False) + "\n")
        for snapshot in bank.snapshots:
            fh.write(json.dumps(_snapshot_to_dict(snapshot), sort_keys=True,
                                ensure_ascii=False) + "\n")


def load_memory(path: str | Path) -> tuple[dict, list[MemorySnapshot]]:
    """Reload a persisted session memory; returns (header, snapshots)."""
    p = Path(path)
    lines = p.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise MalformedTimestamp(f"memory file {p} is empty")
    header = json.loads(lines[0])
    if header.get("type") != "memory_header":
        raise MalformedTimestamp(f"memory file {p} lacks a header line")
    if header.get("schema_version") != MEMORY_SCHEMA_VERSION:
        raise MalformedTimestamp(
            f"memory schema version {header.get('schema_version')} not supported"
        )
    dim = int(header["dim"])
    backend_id = str(header["backend_id"])
    snapshots = []
    for line in lines[1:]:
        raw = json.loads(line)
        snapshots.append(
            MemorySnapshot(
                snapshot_id=int(raw["snapshot_id"]),
                time_span=tuple(raw["span"]),
                caption=raw["caption"],
                objects=None if raw["objects"] is None else [
                    ObjectRecord(label=o["label"], bbox=tuple(o["bbox"]),
                                 confidence=o["confidence"], frame_timestamp=o["t"])
                    for o in raw["objects"]
                ],
                scene_triples=None if raw["scene_triples"] is None else [
                    tuple(t) for t in raw["scene_triples"]
                ],
                frame_refs=None if raw["frame_refs"] is None else [
                    FrameRef(timestamp=f["t"], locator=f["locator"])
                    for f in raw["frame_refs"]
                ],
                text_embedding=None if raw["text_embedding"] is None else Embedding(
                    values=tuple(raw["text_embedding"]), dim=dim, backend_id=backend_id
                ),
                vision_embedding=None if raw["vision_embedding"] is None else Embedding(
                    values=tuple(raw["vision_embedding"]), dim=dim, backend_id=backend_id
                ),
            )
        )
    return header, snapshots
