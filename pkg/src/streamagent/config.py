"""Session configuration: validation, canonical form, file loading."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

STRATEGIES = ("binary", "cot", "adversarial")
MODALITIES = ("text", "vision", "object")
CAPTIONER_MODES = ("gateway", "join")


@dataclass
class SourceSpec:
    """Where the observation stream comes from.

    kind is one of:
      - "frames":   directory of images named ``<seconds>.jpg|png``
      - "captions": JSON Lines file, one ``{"t": s, "text": ...}`` per event
      - "script":   declarative synthetic event script (JSON document)
    """

    kind: str
    path: str
    source_id: str = "default"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "path": self.path, "source_id": self.source_id}

    @classmethod
    def from_dict(cls, raw: dict) -> "SourceSpec":
        if not isinstance(raw, dict) or "kind" not in raw or "path" not in raw:
            raise ConfigError(f"source spec needs 'kind' and 'path': {raw!r}")
        if raw["kind"] not in ("frames", "captions", "script"):
            raise ConfigError(f"unknown source kind {raw['kind']!r}")
        return cls(kind=raw["kind"], path=str(raw["path"]),
                   source_id=str(raw.get("source_id", "default")))


@dataclass
class SessionConfig:
    strategy: str = "binary"
    modalities: list[str] = field(default_factory=lambda: ["text"])
    k: int = 8
    fps: float = 1.0
    frames_per_chunk: int = 32
    gateway: dict = field(default_factory=lambda: {"type": "scripted", "rules": []})
    seed: int = 0
    embedding_dim: int = 64
    # captioner "gateway" sends the captioning prompt to the model gateway;
    # "join" concatenates text events directly (synthetic/caption sources only).
    captioner: str = "gateway"
    fallback_label: str = "A"
    # serve-mode pacing: stream seconds advanced per wall-clock second.
    realtime: bool = False
    time_scale: float = 1.0
    sources: dict[str, SourceSpec] = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if not self.modalities:
            raise ConfigError("at least one modality must be enabled")
        for m in self.modalities:
            if m not in MODALITIES:
                raise ConfigError(f"unknown modality {m!r}")
        if len(set(self.modalities)) != len(self.modalities):
            raise ConfigError("duplicate modality")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.fps <= 0:
            raise ConfigError("fps must be positive")
        if self.frames_per_chunk < 1:
            raise ConfigError("frames_per_chunk must be >= 1")
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim must be >= 1")
        if self.captioner not in CAPTIONER_MODES:
            raise ConfigError(f"captioner must be one of {CAPTIONER_MODES}")
        if self.fallback_label not in ("A", "B", "C", "D"):
            raise ConfigError("fallback_label must be one of A-D")
        if self.time_scale <= 0:
            raise ConfigError("time_scale must be positive")

    def canonical(self) -> dict:
        """Stable dict echoed into transcripts, reports, and manifests."""
        return {
            "strategy": self.strategy,
            "modalities": sorted(self.modalities),
            "k": self.k,
            "fps": self.fps,
            "frames_per_chunk": self.frames_per_chunk,
            "gateway": self.gateway,
            "seed": self.seed,
            "embedding_dim": self.embedding_dim,
            "captioner": self.captioner,
            "fallback_label": self.fallback_label,
            "sources": {vid: s.to_dict() for vid, s in sorted(self.sources.items())},
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SessionConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        known = {
            "strategy", "modalities", "k", "fps", "frames_per_chunk", "gateway",
            "seed", "embedding_dim", "captioner", "fallback_label", "realtime",
            "time_scale", "source", "sources",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        sources: dict[str, SourceSpec] = {}
        if "source" in raw and "sources" in raw:
            raise ConfigError("give either 'source' or 'sources', not both")
        if "source" in raw:
            sources["default"] = SourceSpec.from_dict(raw["source"])
        for vid, spec in (raw.get("sources") or {}).items():
            sources[str(vid)] = SourceSpec.from_dict(spec)
        kwargs = {k: v for k, v in raw.items() if k not in ("source", "sources")}
        kwargs["sources"] = sources
        if "modalities" in kwargs:
            kwargs["modalities"] = list(kwargs["modalities"])
        return cls(**kwargs)


def load_config(path: str | Path) -> SessionConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    cfg = SessionConfig.from_dict(raw)
    # source paths in a config file resolve relative to the file itself
    for spec in cfg.sources.values():
        sp = Path(spec.path)
        if not sp.is_absolute():
            spec.path = str((p.parent / sp).resolve())
    if isinstance(cfg.gateway, dict):
        script = cfg.gateway.get("script")
        if isinstance(script, str) and not Path(script).is_absolute():
            cfg.gateway["script"] = str((p.parent / script).resolve())
    return cfg
