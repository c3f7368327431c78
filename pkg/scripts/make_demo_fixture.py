#!/usr/bin/env python3
"""Regenerate the committed demo fixture under tests/fixtures/demo_stream/.

A 24-second, 3-chunk kitchen scene (8 frames per chunk at 1 fps) with one
query per temporality class. The gateway script is an oracle: each query's
trigger fires exactly when its evidence caption is visible in the prompt, so
session outcomes are fully deterministic.
"""

import json
from pathlib import Path

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "demo_stream"

CHUNK_CAPTIONS = [
    ("/0.jpg", "a man enters the kitchen and fills a kettle"),
    ("/8.jpg", "the man pours hot water into a mug and stirs"),
    ("/16.jpg", "the man drinks the coffee and smiles"),
]

# (question marker, evidence marker, answer label)
QUERY_RULES = [
    ("What did the man fill at the start", "fills a kettle", "B"),
    ("What is the man doing right now", "pours hot water", "C"),
    ("Does the man drink the coffee at some point", "drinks the coffee", "A"),
    ("What will the man most likely do next", "stirs", "D"),
]

ANNOTATIONS = [
    # option texts are deliberately never substrings of any caption, so the
    # no-leakage audit (a substring scan over logged trigger prompts) is exact
    {
        "video_id": "demo", "query_id": "q-kettle", "t_query": 20.0,
        "question": "What did the man fill at the start?",
        "options": {"A": "a flower vase", "B": "the silver kettle on the stove",
                    "C": "a soup pot", "D": "a wine glass"},
        "answer": "B", "window": [20.0, 24.0], "temporality": "past",
        "categories": ["memorization", "contextual"], "complexity": "perception",
    },
    {
        "video_id": "demo", "query_id": "q-now", "t_query": 10.0,
        "question": "What is the man doing right now?",
        "options": {"A": "sleeping on the couch", "B": "running outside",
                    "C": "preparing a hot drink", "D": "washing the dishes"},
        "answer": "C", "window": [10.0, 16.0], "temporality": "present",
        "categories": ["recognition"], "complexity": "perception",
    },
    {
        "video_id": "demo", "query_id": "q-drink", "t_query": 2.0,
        "question": "Does the man drink the coffee at some point?",
        "options": {"A": "yes, he takes a sip", "B": "no, he discards it",
                    "C": "he gives it away", "D": "he spills it"},
        "answer": "A", "window": [16.0, 24.0], "temporality": "future_observation",
        "categories": ["sequential", "temporal"], "complexity": "reasoning",
    },
    {
        "video_id": "demo", "query_id": "q-next", "t_query": 10.0,
        "question": "What will the man most likely do next?",
        "options": {"A": "leave the house", "B": "wash the windows",
                    "C": "make a phone call", "D": "enjoy his drink"},
        "answer": "D", "window": [10.0, 16.0], "temporality": "future_prediction",
        "categories": ["commonsense", "causal"], "complexity": "planning",
    },
]

DETECTIONS = {
    "2.jpg": [
        {"label": "person", "bbox": [0.10, 0.20, 0.25, 0.60], "confidence": 0.95},
        {"label": "kettle", "bbox": [0.60, 0.55, 0.15, 0.20], "confidence": 0.88},
    ],
    "10.jpg": [
        {"label": "person", "bbox": [0.15, 0.20, 0.25, 0.60], "confidence": 0.94},
        {"label": "mug", "bbox": [0.55, 0.60, 0.10, 0.12], "confidence": 0.81},
    ],
    "18.jpg": [
        {"label": "person", "bbox": [0.20, 0.22, 0.25, 0.58], "confidence": 0.93},
        {"label": "mug", "bbox": [0.42, 0.40, 0.10, 0.12], "confidence": 0.84},
    ],
}


def conj(question_marker, evidence_marker):
    return f"(?s)(?=.*{evidence_marker})(?=.*{question_marker})"


def gateway_rules():
    rules = [
        {"template": "captioning", "contains": marker, "response": caption}
        for marker, caption in CHUNK_CAPTIONS
    ]
    for question, evidence, label in QUERY_RULES:
        pattern = conj(question, evidence)
        rules.append({"template": "binary_trigger", "pattern": pattern, "response": "true"})
        rules.append({"template": "cot_trigger", "pattern": pattern,
                      "response": f"The memory shows the moment ({evidence}). true"})
        rules.append({"template": "adversarial_reject", "pattern": pattern,
                      "response": "false"})
        rules.append({"template": "reasoning", "pattern": pattern, "response": label})
    # anything not explicitly answerable is rejected by the adversarial leg
    rules.append({"template": "adversarial_reject", "pattern": "(?s).", "response": "true"})
    return rules


def main():
    frames = FIXTURE_DIR / "frames"
    frames.mkdir(parents=True, exist_ok=True)
    for old in frames.glob("*.jpg"):
        old.unlink()
    for t in range(24):
        (frames / f"{t}.jpg").write_bytes(b"")
    (frames / "objects.json").write_text(
        json.dumps(DETECTIONS, indent=2, sort_keys=True) + "\n")
    (FIXTURE_DIR / "gateway_script.json").write_text(
        json.dumps(gateway_rules(), indent=2) + "\n")
    (FIXTURE_DIR / "annotations.jsonl").write_text(
        "\n".join(json.dumps(r) for r in ANNOTATIONS) + "\n")
    config = {
        "strategy": "binary",
        "modalities": ["text", "object"],
        "k": 8,
        "fps": 1,
        "frames_per_chunk": 8,
        "seed": 7,
        "captioner": "gateway",
        "gateway": {
            "type": "scripted",
            "script": "gateway_script.json",
            "default_response": "false",
        },
        "source": {"kind": "frames", "path": "frames", "source_id": "demo"},
    }
    (FIXTURE_DIR / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    print(f"fixture written to {FIXTURE_DIR}")


if __name__ == "__main__":
    main()
