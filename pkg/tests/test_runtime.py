"""Session loop behavior: admission, cadence, answering, forced resolution."""

import pytest

from streamagent.config import SessionConfig
from streamagent.evidence import EvidenceSet, Query
from streamagent.gateway import ModelGateway, ScriptedBackend, ScriptRule, TemplateId
from streamagent.ingestion import PerceptState, open_source
from streamagent.memory import load_memory
from streamagent.runtime import (
    ListQueryFeed,
    QueueQueryFeed,
    SessionTranscript,
    generate_answer,
    replay_session,
    run_session,
)

from conftest import make_script_source_spec, trigger_rules


def goal_events(n=100, goal_at=65):
    """1 fps ticks; the token GOAL first appears at t=goal_at (chunk 6 of 10)."""
    return [
        {"t": t, "text": "GOAL scored by the striker" if t == goal_at else f"tick {t}",
         "tags": []}
        for t in range(n)
    ]


@pytest.fixture
def goal_config():
    return SessionConfig(strategy="binary", modalities=["text"], k=8,
                         frames_per_chunk=10, captioner="join", seed=7)


def run_goal_session(tmp_path, config, queries, memory_path=None,
                     events=None, rules_token="GOAL"):
    spec = make_script_source_spec(tmp_path, events or goal_events())
    source = open_source(spec, config.frames_per_chunk, config.fps)
    gateway = ModelGateway(ScriptedBackend(trigger_rules(rules_token),
                                           default_response="false"))
    transcript = run_session(config, source, ListQueryFeed(queries), gateway,
                             memory_path=memory_path)
    return transcript, gateway


def test_deferred_then_answered_when_evidence_arrives(tmp_path, goal_config):
    query = Query("q1", "did anyone score a goal", arrival_time=12.0,
                  options=(("A", "nobody"), ("B", "the striker")))
    transcript, _ = run_goal_session(tmp_path, goal_config, [query])

    admitted = transcript.events_of("query_admitted")
    assert len(admitted) == 1
    assert admitted[0].payload["admitted_chunk"] == 1

    decisions = transcript.events_of("trigger_decided")
    # exactly one decision per chunk from admission (chunk 1) through response (chunk 6)
    assert [d.payload["chunk_index"] for d in decisions] == [1, 2, 3, 4, 5, 6]
    assert [d.payload["action"] for d in decisions] == ["defer"] * 5 + ["respond"]

    answered = transcript.events_of("answered")
    assert len(answered) == 1
    payload = answered[0].payload
    assert payload["answer_label"] == "B"
    assert payload["forced"] is False
    # chunk 6 spans [60, 70): the response lands at its end
    assert payload["responded_at"] == 70.0
    assert payload["grounding"]["assembled_at"] <= payload["responded_at"]


def test_unanswerable_query_forced_at_stream_end(tmp_path, goal_config):
    query = Query("q-never", "does a unicorn appear", arrival_time=0.0,
                  options=(("A", "yes"), ("B", "no")))
    # the oracle script fires only on a token that never enters memory
    transcript, _ = run_goal_session(tmp_path, goal_config, [query],
                                     rules_token="UNICORN")
    answered = transcript.events_of("answered")
    assert len(answered) == 1
    assert answered[0].payload["forced"] is True
    assert answered[0].payload["responded_at"] == 100.0  # stream end T
    assert transcript.events_of("stream_ended")[0].payload["forced_count"] == 1
    # one decision for every chunk after admission, none of them Respond
    decisions = transcript.events_of("trigger_decided")
    assert [d.payload["chunk_index"] for d in decisions] == list(range(10))
    assert all(d.payload["action"] == "defer" for d in decisions)


def test_zero_queries_yields_chunks_and_end_only(tmp_path, goal_config):
    transcript, _ = run_goal_session(tmp_path, goal_config, [])
    types = {e.type for e in transcript.events}
    assert types == {"chunk_committed", "stream_ended"}
    assert len(transcript.events_of("chunk_committed")) == 10


def test_memory_count_equals_chunk_count(tmp_path, goal_config):
    memory_path = tmp_path / "memory.jsonl"
    transcript, _ = run_goal_session(tmp_path, goal_config, [], memory_path=memory_path)
    _, snapshots = load_memory(memory_path)
    assert len(snapshots) == len(transcript.events_of("chunk_committed")) == 10


def test_query_arriving_before_stream_admitted_at_chunk_zero(tmp_path, goal_config):
    query = Query("q0", "what happens first", arrival_time=0.0)
    transcript, _ = run_goal_session(tmp_path, goal_config, [query])
    admitted = transcript.events_of("query_admitted")[0]
    assert admitted.payload["admitted_chunk"] == 0


def test_query_arriving_after_stream_end_is_admitted_then_forced(tmp_path, goal_config):
    query = Query("q-late", "anything", arrival_time=500.0,
                  options=(("A", "x"), ("B", "y")))
    transcript, _ = run_goal_session(tmp_path, goal_config, [query])
    admitted = transcript.events_of("query_admitted")
    assert len(admitted) == 1
    assert admitted[0].payload["admitted_chunk"] == 9
    answered = transcript.events_of("answered")[0]
    assert answered.payload["forced"] is True


def test_no_early_answer_and_grounding_respects_time(tmp_path, goal_config):
    query = Query("q1", "did anyone score a goal", arrival_time=12.0,
                  options=(("A", "nobody"), ("B", "the striker")))
    transcript, _ = run_goal_session(tmp_path, goal_config, [query])
    answered = transcript.events_of("answered")[0]
    assert answered.payload["responded_at"] >= query.arrival_time
    # no grounding snapshot starts at or after the response time
    chunk_spans = {e.payload["snapshot_id"]: e.payload["span"]
                   for e in transcript.events_of("chunk_committed")}
    for snapshot_id, _, _ in answered.payload["grounding"]["items"]:
        assert chunk_spans[snapshot_id][0] < answered.payload["responded_at"]


def test_replay_determinism_byte_identical(tmp_path, goal_config):
    query = Query("q1", "did anyone score a goal", arrival_time=12.0,
                  options=(("A", "nobody"), ("B", "the striker")))
    paths = []
    for run in ("a", "b"):
        out = tmp_path / f"transcript_{run}.jsonl"
        transcript, _ = run_goal_session(tmp_path, goal_config, [query])
        transcript.save(out)
        paths.append(out)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_transcript_roundtrip(tmp_path, goal_config):
    query = Query("q1", "did anyone score a goal", arrival_time=12.0,
                  options=(("A", "nobody"), ("B", "the striker")))
    transcript, _ = run_goal_session(tmp_path, goal_config, [query])
    path = tmp_path / "t.jsonl"
    transcript.save(path)
    loaded = SessionTranscript.load(path)
    assert loaded.session_id == transcript.session_id
    assert [e.to_json_obj() for e in loaded.events] == \
        [e.to_json_obj() for e in transcript.events]


def test_event_seq_and_time_monotone(tmp_path, goal_config):
    query = Query("q1", "did anyone score a goal", arrival_time=12.0)
    transcript, _ = run_goal_session(tmp_path, goal_config, [query])
    seqs = [e.seq for e in transcript.events]
    assert seqs == list(range(len(seqs)))
    times = [e.t for e in transcript.events]
    assert times == sorted(times)


def test_gateway_errors_absorbed_per_decision(tmp_path, goal_config):
    from streamagent.errors import GatewayError

    class _DeadBackend:
        def complete(self, request):
            raise GatewayError("down")

    spec = make_script_source_spec(tmp_path, goal_events())
    source = open_source(spec, goal_config.frames_per_chunk, goal_config.fps)
    query = Query("q1", "anything", arrival_time=0.0, options=(("A", "x"), ("B", "y")))
    transcript = run_session(goal_config, source, ListQueryFeed([query]),
                             ModelGateway(_DeadBackend()))
    # every decision deferred, query forced at end with the fallback label
    assert all(d.payload["action"] == "defer"
               for d in transcript.events_of("trigger_decided"))
    answered = transcript.events_of("answered")[0]
    assert answered.payload["forced"] is True
    assert answered.payload["answer_label"] == "A"
    assert answered.payload["parse_failure"] is True


# --- answer generation ---

PERCEPT = PerceptState(chunk_index=0, span=(0.0, 10.0), caption="context")
EVIDENCE = EvidenceSet(query_id="q", assembled_at=10.0, items=(), rendered_context="")
OPTIONS = (("A", "one"), ("B", "two"), ("C", "three"), ("D", "four"))


def answer_gateway(text):
    return ModelGateway(ScriptedBackend(
        [ScriptRule(template=TemplateId.REASONING, pattern=".", response=text)]))


def make_query():
    return Query("q", "which number", arrival_time=0.0, options=OPTIONS)


def test_answer_direct_label():
    record = generate_answer(make_query(), EVIDENCE, PERCEPT, answer_gateway("B"),
                             responded_at=10.0)
    assert record.answer_label == "B"
    assert record.parse_failure is False


def test_answer_label_extracted_from_sentence():
    record = generate_answer(make_query(), EVIDENCE, PERCEPT,
                             answer_gateway("The answer is (C)."), responded_at=10.0)
    assert record.answer_label == "C"


def test_answer_without_label_falls_back_with_flag():
    record = generate_answer(make_query(), EVIDENCE, PERCEPT,
                             answer_gateway("no idea whatsoever"), responded_at=10.0)
    assert record.answer_label == "A"
    assert record.parse_failure is True


def test_answer_prompt_includes_options():
    gw = answer_gateway("D")
    generate_answer(make_query(), EVIDENCE, PERCEPT, gw, responded_at=10.0)
    prompt = gw.call_log[0].request.flattened_user_text()
    for label, text in OPTIONS:
        assert f"{label}. {text}" in prompt


def test_answer_free_text_when_no_options():
    query = Query("q", "describe the scene", arrival_time=0.0)
    record = generate_answer(query, EVIDENCE, PERCEPT,
                             answer_gateway("a man pours coffee"), responded_at=10.0)
    assert record.answer_label == "a man pours coffee"


# --- query feeds ---

def test_list_feed_polls_in_arrival_order():
    queries = [Query(f"q{i}", "x", arrival_time=float(i)) for i in (3, 1, 2)]
    feed = ListQueryFeed(queries)
    assert [q.query_id for q in feed.poll(2.0)] == ["q1", "q2"]
    assert [q.query_id for q in feed.poll(10.0)] == ["q3"]
    assert feed.drain() == []


def test_queue_feed_thread_safe_submission():
    feed = QueueQueryFeed()
    feed.submit("first", arrival_time=5.0)
    feed.submit("second", arrival_time=1.0)
    ready = feed.poll(4.0)
    assert [q.text for q in ready] == ["second"]
    assert [q.text for q in feed.drain()] == ["first"]


# --- replay ---

def test_replay_reproduces_trigger_outcomes(tmp_path, goal_config):
    query = Query("q1", "did anyone score a goal", arrival_time=12.0,
                  options=(("A", "nobody"), ("B", "the striker")))
    memory_path = tmp_path / "memory.jsonl"
    live, _ = run_goal_session(tmp_path, goal_config, [query], memory_path=memory_path)
    _, snapshots = load_memory(memory_path)
    gateway = ModelGateway(ScriptedBackend(trigger_rules("GOAL"),
                                           default_response="false"))
    replay = replay_session(goal_config, snapshots, ListQueryFeed([query]), gateway)
    live_answers = [e.payload for e in live.events_of("answered")]
    replay_answers = [e.payload for e in replay.events_of("answered")]
    assert live_answers == replay_answers
    assert [d.payload["action"] for d in live.events_of("trigger_decided")] == \
        [d.payload["action"] for d in replay.events_of("trigger_decided")]


def test_each_pending_query_gets_one_decision_per_chunk(tmp_path, goal_config):
    """Two pending queries: trigger cadence is per query, per chunk."""
    queries = [
        Query("q-early", "did anyone score a goal", arrival_time=0.0,
              options=(("A", "x"), ("B", "y"))),
        Query("q-late", "was there a goal in the match", arrival_time=35.0,
              options=(("A", "x"), ("B", "y"))),
    ]
    transcript, _ = run_goal_session(tmp_path, goal_config, queries)
    by_query = {}
    for event in transcript.events_of("trigger_decided"):
        by_query.setdefault(event.payload["query_id"], []).append(
            event.payload["chunk_index"])
    # both fire at chunk 6 (the GOAL chunk); cadence runs from admission there
    assert by_query["q-early"] == list(range(0, 7))
    assert by_query["q-late"] == list(range(3, 7))
    answered = {e.payload["query_id"]: e.payload
                for e in transcript.events_of("answered")}
    assert answered["q-early"]["responded_at"] == 70.0
    assert answered["q-late"]["responded_at"] == 70.0
