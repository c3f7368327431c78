"""CLI contract tests over the committed demo fixture."""

import json
from pathlib import Path

from streamagent.cli import main

FIXTURE = Path(__file__).parent / "fixtures" / "demo_stream"
GOLDEN = Path(__file__).parent / "golden"


def run_cli(*argv):
    return main(list(argv))


def bench_args(out, *extra):
    return [
        "bench",
        "--config", str(FIXTURE / "config.json"),
        "--annotations", str(FIXTURE / "annotations.jsonl"),
        "--out", str(out),
        *extra,
    ]


def test_bench_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "run"
    assert run_cli(*bench_args(out)) == 0
    for name in ("transcript.jsonl", "memory.jsonl", "report.json",
                 "report.txt", "categories.csv", "manifest.json"):
        assert (out / name).is_file(), name
    report = json.loads((out / "report.json").read_text())
    assert report["overall_accuracy"] == 100.0
    assert report["forced_count"] == 0
    assert report["mean_delta"] == 0.0


def test_bench_missing_annotations_exit_2(tmp_path, capsys):
    code = run_cli(
        "bench",
        "--config", str(FIXTURE / "config.json"),
        "--annotations", str(tmp_path / "missing.jsonl"),
        "--out", str(tmp_path / "out"),
    )
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"]["code"] == "MissingInput"


def test_bench_strategy_grid_reports_and_forced_ordering(tmp_path, capsys):
    out = tmp_path / "grid"
    assert run_cli(*bench_args(out, "--grid",
                               "strategies=binary,cot,adversarial")) == 0
    reports = {}
    for strategy in ("binary", "cot", "adversarial"):
        cell = out / f"{strategy}__text-object"
        assert (cell / "report.json").is_file()
        reports[strategy] = json.loads((cell / "report.json").read_text())
    assert len(reports) == 3
    assert reports["adversarial"]["forced_count"] <= reports["binary"]["forced_count"]
    table = (out / "grid_table.txt").read_text()
    assert table.splitlines()[0].startswith("Trigger")


def test_bench_modality_grid_matches_golden(tmp_path, capsys):
    out = tmp_path / "grid"
    assert run_cli(*bench_args(
        out, "--grid", "modalities=vision,text,text+vision,text+object")) == 0
    got = (out / "grid_table.txt").read_bytes()
    assert got == (GOLDEN / "grid_table_modalities.txt").read_bytes()


def test_bench_single_report_matches_golden(tmp_path, capsys):
    out = tmp_path / "run"
    assert run_cli(*bench_args(out)) == 0
    assert (out / "report.txt").read_bytes() == \
        (GOLDEN / "report_single.txt").read_bytes()


def test_bench_replay_determinism(tmp_path, capsys):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run_cli(*bench_args(out_a)) == 0
    assert run_cli(*bench_args(out_b)) == 0
    assert (out_a / "transcript.jsonl").read_bytes() == \
        (out_b / "transcript.jsonl").read_bytes()
    assert (out_a / "report.json").read_bytes() == (out_b / "report.json").read_bytes()
    manifest_a = json.loads((out_a / "manifest.json").read_text())
    manifest_b = json.loads((out_b / "manifest.json").read_text())
    assert manifest_a["inputs_hash"] == manifest_b["inputs_hash"]


def test_score_rescoring_matches_bench_report(tmp_path, capsys):
    out = tmp_path / "run"
    assert run_cli(*bench_args(out)) == 0
    rescored = tmp_path / "rescored"
    assert run_cli(
        "score",
        "--transcript", str(out / "transcript.jsonl"),
        "--annotations", str(FIXTURE / "annotations.jsonl"),
        "--out", str(rescored),
    ) == 0
    original = json.loads((out / "report.json").read_text())
    again = json.loads((rescored / "report.json").read_text())
    for key in ("overall_accuracy", "mean_delta", "std_delta", "forced_count",
                "accuracy_by_temporality", "accuracy_by_category"):
        assert original[key] == again[key]


def test_replay_from_persisted_memory(tmp_path, capsys):
    out = tmp_path / "run"
    assert run_cli(*bench_args(out)) == 0
    replayed = tmp_path / "replayed"
    assert run_cli(
        "replay",
        "--memory", str(out / "memory.jsonl"),
        "--config", str(FIXTURE / "config.json"),
        "--annotations", str(FIXTURE / "annotations.jsonl"),
        "--out", str(replayed),
    ) == 0
    live = json.loads((out / "report.json").read_text())
    replay = json.loads((replayed / "report.json").read_text())
    assert replay["overall_accuracy"] == live["overall_accuracy"]
    assert replay["mean_delta"] == live["mean_delta"]
    assert replay["forced_count"] == live["forced_count"]


def test_no_options_leak_into_trigger_prompts(tmp_path, capsys):
    out = tmp_path / "run"
    assert run_cli(*bench_args(out)) == 0
    option_texts = []
    for line in (FIXTURE / "annotations.jsonl").read_text().splitlines():
        option_texts.extend(json.loads(line)["options"].values())
    trigger_templates = {"binary_trigger", "cot_trigger", "adversarial_reject"}
    saw_trigger_calls = False
    for line in (out / "gateway_calls.jsonl").read_text().splitlines():
        call = json.loads(line)
        if call["template"] not in trigger_templates:
            continue
        saw_trigger_calls = True
        for text in option_texts:
            assert text not in call["user"]
    assert saw_trigger_calls


def test_unknown_grid_axis_is_config_error(tmp_path, capsys):
    code = run_cli(*bench_args(tmp_path / "x", "--grid", "clocks=a,b"))
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"]["code"] == "ConfigError"


def test_bench_multi_video_sources(tmp_path, capsys):
    import conftest

    for vid, token in (("vid-a", "ALPHA"), ("vid-b", "BETA")):
        conftest.write_script(tmp_path / f"{vid}.json", [
            {"t": t, "text": f"{token} event {t}", "tags": []} for t in range(8)
        ])
    config = {
        "strategy": "binary",
        "modalities": ["text"],
        "frames_per_chunk": 4,
        "captioner": "join",
        "seed": 3,
        "gateway": {"type": "scripted", "rules": [], "default_response": "false"},
        "sources": {
            "vid-a": {"kind": "script", "path": "vid-a.json"},
            "vid-b": {"kind": "script", "path": "vid-b.json"},
        },
    }
    (tmp_path / "config.json").write_text(json.dumps(config))
    annotations = [
        {"video_id": "vid-a", "query_id": "qa", "t_query": 1.0,
         "question": "what letter", "options": {"A": "alpha", "B": "beta"},
         "answer": "A", "window": [0.0, 8.0], "temporality": "present",
         "categories": ["recognition"], "complexity": "perception"},
        {"video_id": "vid-b", "query_id": "qb", "t_query": 1.0,
         "question": "what letter", "options": {"A": "beta", "B": "alpha"},
         "answer": "A", "window": [0.0, 8.0], "temporality": "present",
         "categories": ["recognition"], "complexity": "perception"},
    ]
    (tmp_path / "annotations.jsonl").write_text(
        "\n".join(json.dumps(a) for a in annotations) + "\n")
    out = tmp_path / "out"
    assert run_cli(
        "bench",
        "--config", str(tmp_path / "config.json"),
        "--annotations", str(tmp_path / "annotations.jsonl"),
        "--out", str(out),
    ) == 0
    for vid in ("vid-a", "vid-b"):
        assert (out / f"transcript_{vid}.jsonl").is_file()
        assert (out / f"memory_{vid}.jsonl").is_file()
    report = json.loads((out / "report.json").read_text())
    assert report["n_queries"] == 2
    # the trigger never fires (no rules), so both are forced fallback answers
    assert report["forced_count"] == 2
    assert report["overall_accuracy"] == 100.0


def test_source_override_flag(tmp_path, capsys):
    import conftest

    conftest.write_script(tmp_path / "other.json", [
        {"t": t, "text": f"tick {t}", "tags": []} for t in range(8)
    ])
    annotations = [{
        "video_id": "default", "query_id": "q", "t_query": 1.0,
        "question": "anything", "options": {"A": "x", "B": "y"}, "answer": "A",
        "window": [0.0, 8.0], "temporality": "present",
        "categories": ["recognition"], "complexity": "perception",
    }]
    (tmp_path / "annotations.jsonl").write_text(
        "\n".join(json.dumps(a) for a in annotations) + "\n")
    config = {
        "strategy": "binary", "modalities": ["text"], "frames_per_chunk": 4,
        "captioner": "join", "seed": 3,
        "gateway": {"type": "scripted", "rules": [], "default_response": "false"},
    }
    (tmp_path / "config.json").write_text(json.dumps(config))
    out = tmp_path / "out"
    assert run_cli(
        "bench",
        "--config", str(tmp_path / "config.json"),
        "--annotations", str(tmp_path / "annotations.jsonl"),
        "--source", f"script:{tmp_path / 'other.json'}",
        "--out", str(out),
    ) == 0
    transcript = (out / "transcript.jsonl").read_text()
    assert '"chunk_committed"' in transcript
