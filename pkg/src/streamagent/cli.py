"""Operator CLI: benchmark runs, ablation grids, offline scoring, replays, serving.

Commands
  bench   run sessions over annotated sources and score them; --grid expands
          a {strategy x modality} matrix and emits a combined table
  score   re-score a persisted transcript against annotations
  replay  re-run triggers over persisted memory (trigger-only ablation)
  serve   expose a live session to the browser console over WebSocket

Failures print machine-readable JSON to stderr: {"error": {"code", "message"}}.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import MODALITIES, STRATEGIES, SessionConfig, SourceSpec, load_config
from .errors import ConfigError, MissingInput, StreamAgentError
from .evaluation import (
    aggregate_records,
    category_csv,
    load_annotations,
    records_from_transcript,
    render_table,
    score_transcript,
)
from .gateway import build_gateway
from .ingestion import open_source
from .memory import load_memory
from .runtime import (
    ListQueryFeed,
    SessionTranscript,
    build_embedder,
    build_pipeline,
    canonical_json,
    derive_session_id,
    replay_session,
    run_session,
)


def _hash_file(h, path: Path) -> None:
    h.update(path.name.encode("utf-8"))
    h.update(path.read_bytes())


def hash_inputs(config: SessionConfig, annotations_path: Path | None) -> str:
    """Content hash over everything that determines a run's outputs."""
    h = hashlib.sha256()
    h.update(canonical_json(config.canonical()).encode("utf-8"))
    if annotations_path is not None:
        _hash_file(h, annotations_path)
    for _, spec in sorted(config.sources.items()):
        p = Path(spec.path)
        if p.is_file():
            _hash_file(h, p)
        elif p.is_dir():
            for entry in sorted(p.iterdir()):
                if entry.is_file():
                    _hash_file(h, entry)
    script = config.gateway.get("script") if isinstance(config.gateway, dict) else None
    if isinstance(script, str) and Path(script).is_file():
        _hash_file(h, Path(script))
    return h.hexdigest()


def _resolve_source(config: SessionConfig, video_id: str) -> SourceSpec:
    spec = config.sources.get(video_id) or config.sources.get("default")
    if spec is None:
        raise MissingInput(f"no source configured for video {video_id!r}")
    return spec


def _run_one(config: SessionConfig, annotations, out_dir: Path,
             inputs_hash: str) -> list:
    """Run one session per video, persist artifacts, return eval records."""
    by_video: dict[str, list] = {}
    for query, annotation in annotations:
        by_video.setdefault(annotation.video_id, []).append((query, annotation))
    records = []
    multi = len(by_video) > 1
    for video_id, pairs in sorted(by_video.items()):
        spec = _resolve_source(config, video_id)
        source = open_source(spec, config.frames_per_chunk, config.fps)
        gateway = build_gateway(config.gateway)
        embedder = build_embedder(config)
        pipeline = build_pipeline(config, gateway, spec)
        suffix = f"_{video_id}" if multi else ""
        transcript = run_session(
            config,
            source,
            ListQueryFeed([q for q, _ in pairs]),
            gateway,
            pipeline=pipeline,
            embedder=embedder,
            session_id=derive_session_id(config, extra=f"{video_id}|{inputs_hash}"),
            memory_path=out_dir / f"memory{suffix}.jsonl",
        )
        transcript.save(out_dir / f"transcript{suffix}.jsonl")
        gateway.dump_call_log(out_dir / f"gateway_calls{suffix}.jsonl")
        records.extend(records_from_transcript(transcript, pairs))
    return records


def _write_report(records, config: SessionConfig, out_dir: Path, label: str):
    report = aggregate_records(records, config=config.canonical())
    report.save_json(out_dir / "report.json")
    (out_dir / "report.txt").write_text(render_table([(label, report)]),
                                        encoding="utf-8")
    (out_dir / "categories.csv").write_text(category_csv(report), encoding="utf-8")
    return report


def _parse_grid(values: list[str]) -> dict[str, list[str]]:
    axes: dict[str, list[str]] = {}
    for value in values:
        for clause in value.split(";"):
            clause = clause.strip()
            if not clause:
                continue
            if "=" not in clause:
                raise ConfigError(f"grid clause needs axis=values: {clause!r}")
            axis, _, items = clause.partition("=")
            axis = axis.strip()
            if axis not in ("strategies", "modalities"):
                raise ConfigError(f"unknown grid axis {axis!r}")
            axes[axis] = [v.strip() for v in items.split(",") if v.strip()]
    return axes


def _modality_list(combo: str) -> list[str]:
    parts = [p.strip() for p in combo.split("+") if p.strip()]
    for p in parts:
        if p not in MODALITIES:
            raise ConfigError(f"unknown modality {p!r} in grid combo {combo!r}")
    return parts


def cmd_bench(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.source:
        kind, _, path = args.source.partition(":")
        config.sources = {"default": SourceSpec.from_dict({"kind": kind, "path": path})}
    annotations_path = Path(args.annotations)
    annotations = load_annotations(annotations_path)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    axes = _parse_grid(args.grid) if args.grid else {}
    strategies = axes.get("strategies", [config.strategy])
    combos = axes.get("modalities", ["+".join(config.modalities)])
    for strategy in strategies:
        if strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {strategy!r} in grid")

    cells = [(s, m) for s in strategies for m in combos]
    grid_rows = []
    for strategy, combo in cells:
        cell_config = replace(config, strategy=strategy,
                              modalities=_modality_list(combo))
        inputs_hash = hash_inputs(cell_config, annotations_path)
        cell_dir = out_dir if len(cells) == 1 else \
            out_dir / f"{strategy}__{combo.replace('+', '-')}"
        cell_dir.mkdir(parents=True, exist_ok=True)
        records = _run_one(cell_config, annotations, cell_dir, inputs_hash)
        if len(strategies) > 1 and len(combos) > 1:
            label = f"{strategy}/{combo}"
        elif len(combos) > 1:
            label = combo
        else:
            label = strategy
        report = _write_report(records, cell_config, cell_dir, label)
        manifest = {
            "run_id": inputs_hash[:12],
            "config_path": str(Path(args.config).resolve()),
            "annotations_path": str(annotations_path.resolve()),
            "out_dir": str(cell_dir.resolve()),
            "sources": {vid: s.to_dict() for vid, s in sorted(cell_config.sources.items())},
            "inputs_hash": inputs_hash,
        }
        (cell_dir / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        grid_rows.append((label, report))

    if len(cells) > 1:
        if len(combos) > 1 and len(strategies) == 1:
            header = "Memory"
        elif len(strategies) > 1 and len(combos) == 1:
            header = "Trigger"
        else:
            header = "Config"
        table = render_table(grid_rows, label_header=header)
        (out_dir / "grid_table.txt").write_text(table, encoding="utf-8")
        sys.stdout.write(table)
    else:
        sys.stdout.write(render_table(grid_rows))
    return 0


def cmd_score(args) -> int:
    transcript_path = Path(args.transcript)
    if not transcript_path.is_file():
        raise MissingInput(f"transcript file not found: {transcript_path}")
    transcript = SessionTranscript.load(transcript_path)
    annotations = load_annotations(Path(args.annotations))
    report = score_transcript(transcript, annotations, config=transcript.config)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        report.save_json(out_dir / "report.json")
        (out_dir / "report.txt").write_text(
            render_table([(transcript.config.get("strategy", "run"), report)]),
            encoding="utf-8")
        (out_dir / "categories.csv").write_text(category_csv(report), encoding="utf-8")
    sys.stdout.write(json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n")
    return 0


def cmd_replay(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    memory_path = Path(args.memory)
    if not memory_path.is_file():
        raise MissingInput(f"memory file not found: {memory_path}")
    header, snapshots = load_memory(memory_path)
    # the persisted memory dictates which modalities exist to search over
    config = replace(config, modalities=list(header["modalities"]),
                     embedding_dim=int(header["dim"]))
    annotations = load_annotations(Path(args.annotations))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    gateway = build_gateway(config.gateway)
    transcript = replay_session(
        config, snapshots, ListQueryFeed([q for q, _ in annotations]), gateway,
        session_id=derive_session_id(config, extra=f"replay|{header['backend_id']}"),
    )
    transcript.save(out_dir / "transcript.jsonl")
    gateway.dump_call_log(out_dir / "gateway_calls.jsonl")
    records = records_from_transcript(transcript, annotations)
    _write_report(records, config, out_dir, config.strategy)
    return 0


def cmd_serve(args) -> int:
    from .service import serve_forever

    config = load_config(args.config)
    return serve_forever(config, host=args.host, port=args.port,
                         time_scale=args.time_scale)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamagent",
        description="Streaming QA agent runtime and temporal-awareness benchmark",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="run and score benchmark sessions")
    bench.add_argument("--config", required=True)
    bench.add_argument("--annotations", required=True)
    bench.add_argument("--source", help="override source as kind:path")
    bench.add_argument("--out", required=True)
    bench.add_argument("--grid", action="append",
                       help="axis=values, e.g. strategies=binary,cot,adversarial "
                            "or modalities=vision,text,text+vision,text+object")
    bench.add_argument("--seed", type=int)
    bench.set_defaults(func=cmd_bench)

    score = sub.add_parser("score", help="re-score a persisted transcript")
    score.add_argument("--transcript", required=True)
    score.add_argument("--annotations", required=True)
    score.add_argument("--out")
    score.set_defaults(func=cmd_score)

    rep = sub.add_parser("replay", help="re-run triggers from persisted memory")
    rep.add_argument("--memory", required=True)
    rep.add_argument("--config", required=True)
    rep.add_argument("--annotations", required=True)
    rep.add_argument("--out", required=True)
    rep.add_argument("--seed", type=int)
    rep.set_defaults(func=cmd_replay)

    serve = sub.add_parser("serve", help="serve a live session to the console UI")
    serve.add_argument("--config", required=True)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8765)
    serve.add_argument("--time-scale", type=float, default=None,
                       help="stream seconds advanced per wall second")
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StreamAgentError as exc:
        sys.stderr.write(json.dumps(
            {"error": {"code": exc.code, "message": str(exc)}}) + "\n")
        return 2
    except Exception as exc:  # noqa: BLE001 - surface as machine-readable error
        sys.stderr.write(json.dumps(
            {"error": {"code": "Internal", "message": f"{type(exc).__name__}: {exc}"}}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
