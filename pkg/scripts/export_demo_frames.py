#!/usr/bin/env python3
"""Export the demo session's server frames for the browser console's tests.

Runs the committed demo fixture in-process, maps transcript events to wire
frames exactly as the live service does, and writes them to
frontend/test/fixtures/demo_frames.json.
"""

import json
from pathlib import Path

from streamagent.cli import main as cli_main
from streamagent.service import FRAME_TYPE_BY_EVENT

ROOT = Path(__file__).resolve().parent.parent
FIXTURE = ROOT / "tests" / "fixtures" / "demo_stream"
OUT = ROOT / "frontend" / "test" / "fixtures" / "demo_frames.json"


def main():
    run_dir = ROOT / "frontend" / "test" / "fixtures" / "_run"
    run_dir.mkdir(parents=True, exist_ok=True)
    code = cli_main([
        "bench",
        "--config", str(FIXTURE / "config.json"),
        "--annotations", str(FIXTURE / "annotations.jsonl"),
        "--out", str(run_dir),
    ])
    if code != 0:
        raise SystemExit(code)
    frames = []
    for line in (run_dir / "transcript.jsonl").read_text().splitlines():
        event = json.loads(line)
        if event.get("type") == "session_header":
            continue
        frame = {"type": FRAME_TYPE_BY_EVENT[event["type"]], "seq": event["seq"],
                 "t": event["t"]}
        frame.update({k: v for k, v in event.items()
                      if k not in ("type", "seq", "t", "wall_ms")})
        frames.append(frame)
    OUT.write_text(json.dumps(frames, indent=2, ensure_ascii=False) + "\n")
    for leftover in run_dir.iterdir():
        leftover.unlink()
    run_dir.rmdir()
    print(f"wrote {len(frames)} frames to {OUT}")


if __name__ == "__main__":
    main()
