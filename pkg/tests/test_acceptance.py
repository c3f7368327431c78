"""Acceptance suite: one test per shipping criterion, each with its stated
tolerance and runtime budget. Run with ``pytest tests/test_acceptance.py -v -s``
to see one PASS line per criterion.
"""

import hashlib
import json
import time
from pathlib import Path

import numpy as np

from streamagent.cli import main as cli_main
from streamagent.config import SessionConfig, SourceSpec
from streamagent.evaluation import score_transcript, temporal_offset
from streamagent.evidence import Query
from streamagent.gateway import (
    ModelGateway,
    ScriptedBackend,
    ScriptRule,
    TemplateId,
    load_template,
)
from streamagent.ingestion import PerceptState, open_source
from streamagent.memory import HashEmbedder, MemoryBank, load_memory
from streamagent.runtime import ListQueryFeed, run_session
from streamagent.triggers import (
    TriggerAction,
    decide_adversarial,
    decide_binary,
    decide_cot,
)

from conftest import trigger_rules, write_script

FIXTURE = Path(__file__).parent / "fixtures" / "demo_stream"
GOLDEN = Path(__file__).parent / "golden"


def report_pass(name):
    print(f"\nACCEPTANCE {name}: PASS")


# ---------------------------------------------------------------- criterion 1

def test_delta_metric_oracle():
    """10,000 randomized (responded_at, window) pairs match an independent
    piecewise implementation exactly (0 tolerance), in under 1 second."""

    def oracle(responded, window):
        start, end = window
        return min(responded - start, 0.0) + max(responded - end, 0.0)

    rng = np.random.default_rng(20240601)
    started = time.perf_counter()
    for _ in range(10_000):
        start = float(rng.uniform(-1e4, 1e4))
        end = start + float(rng.uniform(0, 1e4))
        responded = float(rng.uniform(-2e4, 2e4))
        assert temporal_offset(responded, (start, end)) == oracle(responded, (start, end))
    assert temporal_offset(130.0, (120.0, 150.0)) == 0.0
    assert temporal_offset(100.0, (120.0, 150.0)) == -20.0
    assert temporal_offset(180.0, (120.0, 150.0)) == 30.0
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0, f"took {elapsed:.2f}s"
    report_pass("delta-metric-oracle")


# ---------------------------------------------------------------- criterion 2

def test_retrieval_equivalence():
    """100 random corpora (up to 5,000 snapshots, dim 64, seeded hash
    embedder): top-k for k in {1, 8, 16} equals a brute-force full sort with
    the earlier-id tie-break, id for id. Under 30 seconds."""
    rng = np.random.default_rng(7_777)
    vocab = np.array(["goal", "man", "door", "cup", "run", "sit", "red", "blue",
                      "open", "close", "cat", "dog"])
    started = time.perf_counter()
    sizes = [5000, 5000] + list(rng.integers(1, 1200, size=98))
    for corpus_index, size in enumerate(sizes):
        embedder = HashEmbedder(dim=64, seed=corpus_index)
        bank = MemoryBank(["text"], dim=64)
        vectors = []
        for i in range(int(size)):
            text = " ".join(rng.choice(vocab, size=int(rng.integers(1, 6))))
            percept = PerceptState(i, (float(i), float(i + 1)), caption=text)
            bank.retain(percept, embedder)
            vectors.append(bank.snapshots[i].text_embedding.as_array())
        query = embedder.embed(" ".join(rng.choice(vocab, size=4)))
        qv = query.as_array()
        scores = [float(v @ qv) for v in vectors]
        full_sort = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
        for k in (1, 8, 16):
            got = [h.snapshot_id for h in bank.search(query, k=k, modality="text")]
            assert got == full_sort[:k], f"corpus {corpus_index} size {size} k={k}"
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"took {elapsed:.2f}s"
    report_pass("retrieval-equivalence")


# ---------------------------------------------------------------- criterion 3

def test_trigger_decision_suites():
    """Adversarial truth table is exactly {TT: Defer, TF: Respond, FT: Defer,
    FF: Defer}; binary and CoT parse suites fail closed on garbage. Under 1s."""
    started = time.perf_counter()
    query = Query("q", "did it happen", 0.0,
                  options=(("A", "yes"), ("B", "no"), ("C", "later"), ("D", "never")))
    percept = PerceptState(0, (0.0, 10.0), caption="something happens")
    from streamagent.evidence import EvidenceSet
    evidence = EvidenceSet("q", 10.0, (), "[t=0s–10s] something happens")

    def gateway(answerable, reject):
        return ModelGateway(ScriptedBackend([
            ScriptRule(template=TemplateId.BINARY_TRIGGER, pattern=".",
                       response=answerable),
            ScriptRule(template=TemplateId.ADVERSARIAL_REJECT, pattern=".",
                       response=reject),
            ScriptRule(template=TemplateId.COT_TRIGGER, pattern=".",
                       response=answerable),
        ]))

    table = {
        ("true", "true"): TriggerAction.DEFER,
        ("true", "false"): TriggerAction.RESPOND,
        ("false", "true"): TriggerAction.DEFER,
        ("false", "false"): TriggerAction.DEFER,
    }
    for (a, r), expected in table.items():
        decision = decide_adversarial(query, evidence, percept, gateway(a, r))
        assert decision.action is expected, (a, r)
    assert sum(action is TriggerAction.RESPOND for action in table.values()) == 1

    for text, expected in [
        ("true", TriggerAction.RESPOND), ("yes", TriggerAction.RESPOND),
        ("TRUE", TriggerAction.RESPOND), ("false", TriggerAction.DEFER),
        ("no", TriggerAction.DEFER), ("maybe", TriggerAction.DEFER),
        ("", TriggerAction.DEFER), ("%$#@!", TriggerAction.DEFER),
        ("I think... true", TriggerAction.RESPOND),
        ("true but actually false", TriggerAction.DEFER),
    ]:
        assert decide_binary(query, evidence, percept,
                             gateway(text, "false")).action is expected, text
        assert decide_cot(query, evidence, percept,
                          gateway(text, "false")).action is expected, text
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0, f"took {elapsed:.2f}s"
    report_pass("adversarial-truth-table-and-parse-suites")


# ---------------------------------------------------------------- criterion 4

def test_end_to_end_timeliness(tmp_path):
    """Ten 10-second chunks; the evidence token lands in chunk 6; the query is
    admitted in chunk 1. The answer must arrive within one chunk duration of
    the evidence commit, inside a window set to chunk 6's span, and be
    correct. Under 10 seconds."""
    started = time.perf_counter()
    events = [
        {"t": t, "text": "GOAL scored by the striker" if t == 65 else f"tick {t}",
         "tags": []}
        for t in range(100)
    ]
    script = write_script(tmp_path / "stream.json", events)
    config = SessionConfig(strategy="binary", modalities=["text"], k=8,
                           frames_per_chunk=10, captioner="join", seed=7)
    source = open_source(SourceSpec("script", str(script)), 10, 1)
    gateway = ModelGateway(ScriptedBackend(trigger_rules("GOAL", "B"),
                                           default_response="false"))
    query = Query("q1", "did anyone score a goal", arrival_time=12.0,
                  options=(("A", "nobody scores"), ("B", "the striker scores")))
    transcript = run_session(config, source, ListQueryFeed([query]), gateway)

    chunks = transcript.events_of("chunk_committed")
    chunk_duration = chunks[0].payload["span"][1] - chunks[0].payload["span"][0]
    assert transcript.events_of("query_admitted")[0].payload["admitted_chunk"] == 1
    evidence_chunk = next(c for c in chunks if "GOAL" in (c.payload["caption"] or ""))
    assert evidence_chunk.payload["chunk_index"] == 6
    commit_time = evidence_chunk.t

    answered = transcript.events_of("answered")
    assert len(answered) == 1
    payload = answered[0].payload
    assert payload["forced"] is False
    lag = payload["responded_at"] - commit_time
    assert 0.0 <= lag <= chunk_duration, f"lag {lag}"

    window = tuple(evidence_chunk.payload["span"])
    assert temporal_offset(payload["responded_at"], window) == 0.0
    assert payload["answer_label"] == "B"

    # the full scorer agrees: 100% accuracy, zero offset against that window
    from streamagent.evaluation import Complexity, QueryAnnotation, Temporality
    annotation = QueryAnnotation(
        answer_label="B", window=window,
        temporality=Temporality.FUTURE_OBSERVATION,
        categories=("recognition",), complexity=Complexity.PERCEPTION,
    )
    report = score_transcript(transcript, [(query, annotation)])
    assert report.overall_accuracy == 100.0
    assert report.mean_delta == 0.0
    assert report.std_delta == 0.0
    assert report.forced_count == 0
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"took {elapsed:.2f}s"
    report_pass("end-to-end-timeliness")


# ---------------------------------------------------------------- criterion 5

def test_replay_determinism_full_bench(tmp_path):
    """Two identically seeded bench runs produce byte-identical
    transcript.jsonl and report.json."""
    outs = []
    for name in ("first", "second"):
        out = tmp_path / name
        code = cli_main([
            "bench",
            "--config", str(FIXTURE / "config.json"),
            "--annotations", str(FIXTURE / "annotations.jsonl"),
            "--out", str(out),
            "--seed", "7",
        ])
        assert code == 0
        outs.append(out)
    first, second = outs
    assert (first / "transcript.jsonl").read_bytes() == \
        (second / "transcript.jsonl").read_bytes()
    assert (first / "report.json").read_bytes() == (second / "report.json").read_bytes()
    report_pass("replay-determinism")


# ---------------------------------------------------------------- criterion 6

def test_no_leakage_audits(tmp_path):
    """Logged trigger prompts carry no MCQ option strings; no evidence set
    contains a snapshot starting after its query's response time; snapshot
    count equals chunk count."""
    out = tmp_path / "run"
    assert cli_main([
        "bench",
        "--config", str(FIXTURE / "config.json"),
        "--annotations", str(FIXTURE / "annotations.jsonl"),
        "--out", str(out),
    ]) == 0

    option_texts = []
    for line in (FIXTURE / "annotations.jsonl").read_text().splitlines():
        option_texts.extend(json.loads(line)["options"].values())
    trigger_templates = {"binary_trigger", "cot_trigger", "adversarial_reject"}
    trigger_calls = 0
    for line in (out / "gateway_calls.jsonl").read_text().splitlines():
        call = json.loads(line)
        if call["template"] in trigger_templates:
            trigger_calls += 1
            for text in option_texts:
                assert text not in call["user"], text
    assert trigger_calls > 0

    transcript_lines = [json.loads(l) for l in
                        (out / "transcript.jsonl").read_text().splitlines()]
    spans = {e["snapshot_id"]: e["span"] for e in transcript_lines
             if e.get("type") == "chunk_committed"}
    responded_at = {}
    for e in transcript_lines:
        if e.get("type") == "answered":
            responded_at[e["query_id"]] = e["responded_at"]
            for snapshot_id, _, _ in e["grounding"]["items"]:
                assert spans[snapshot_id][0] < e["responded_at"]
        if e.get("type") == "trigger_decided":
            for snapshot_id in e["evidence_ids"]:
                assert spans[snapshot_id][0] < e["t"]

    _, snapshots = load_memory(out / "memory.jsonl")
    assert len(snapshots) == len(spans)
    report_pass("no-leakage-audits")


# ---------------------------------------------------------------- criterion 7

def test_report_shape_reproduction(tmp_path):
    """bench --grid emits a table with exactly the canonical column set and
    the four memory-formation rows; golden-file compared."""
    out = tmp_path / "grid"
    assert cli_main([
        "bench",
        "--config", str(FIXTURE / "config.json"),
        "--annotations", str(FIXTURE / "annotations.jsonl"),
        "--out", str(out),
        "--grid", "modalities=vision,text,text+vision,text+object",
    ]) == 0
    table = (out / "grid_table.txt").read_text()
    header = table.splitlines()[0]
    for column in ("Overall", "Past", "Present", "Future-Prediction",
                   "Future-Observation", "Mean δ", "Std δ"):
        assert column in header
    rows = [line.split()[0] for line in table.splitlines()[2:]]
    assert rows == ["vision", "text", "text+vision", "text+object"]
    assert (out / "grid_table.txt").read_bytes() == \
        (GOLDEN / "grid_table_modalities.txt").read_bytes()
    report_pass("report-shape-reproduction")


# ---------------------------------------------------------------- criterion 8

TEMPLATE_SHA256 = {
    TemplateId.CAPTIONING: "e9481712d582273090b132deea672cba8b342a06be4219641b895505eb060aed",
    TemplateId.BINARY_TRIGGER: "39aefa00d84a0408abafcca8e3fa692354eae44bf74d1ab12867967edefa4285",
    TemplateId.COT_TRIGGER: "975f225f9a00ad815fd0077865381e0a94ffedfc807c54c26e9e246d187826da",
    TemplateId.ADVERSARIAL_REJECT: "b7c11feb0f0bdc7bd34f0e4f6873c8c5c2968cab4b9bfac68b32aa2d15a1769a",
    TemplateId.REASONING: "b54915ac36fc7902f092a2649280e80fa9c8fc59eca499e7581c9ae81d03c09d",
}


def test_template_integrity():
    """Stored prompt assets byte-match their pinned checksums, including the
    CAN/CANNOT capitalization that distinguishes the adversarial legs."""
    for template_id, expected in TEMPLATE_SHA256.items():
        text = load_template(template_id)
        assert hashlib.sha256(text.encode("utf-8")).hexdigest() == expected, template_id
    assert "CAN be answered" in load_template(TemplateId.BINARY_TRIGGER)
    assert "CANNOT be answered" in load_template(TemplateId.ADVERSARIAL_REJECT)
    # the two legs must never collapse into one prompt
    assert load_template(TemplateId.BINARY_TRIGGER) != \
        load_template(TemplateId.ADVERSARIAL_REJECT)
    report_pass("template-integrity")
