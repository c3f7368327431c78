"""Respond-or-defer decisions over identified evidence.

Three strategies share one prompt body (memory context, current observation,
question, and never the answer options) and differ in the system template and
the decision rule. Every failure path, wire or parse, yields Defer: a trigger
may be wrong about deferring but must never respond on a broken signal.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .errors import GatewayError
from .evidence import EvidenceSet, Query, render_percept
from .gateway import ModelGateway, ModelRequest, TemplateId, TextPart
from .ingestion import PerceptState, StreamTime


class TriggerAction(str, Enum):
    RESPOND = "respond"
    DEFER = "defer"


class TriggerStrategy(str, Enum):
    BINARY_QA = "binary"
    COT_REASONING = "cot"
    ADVERSARIAL_VERIFICATION = "adversarial"


@dataclass(frozen=True)
class TriggerDecision:
    query_id: str
    decided_at: StreamTime
    action: TriggerAction
    strategy: TriggerStrategy
    raw_model_outputs: tuple[str, ...]
    parsed_signals: tuple[bool, ...]
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        expected = 2 if self.strategy is TriggerStrategy.ADVERSARIAL_VERIFICATION else 1
        if len(self.raw_model_outputs) != expected or len(self.parsed_signals) != expected:
            raise ValueError(
                f"{self.strategy.value} decisions carry exactly {expected} outputs/signals"
            )


AFFIRMATIVE_TOKENS = frozenset({"true", "yes"})
NEGATIVE_TOKENS = frozenset({"false", "no"})


def parse_boolean_signal(text: str) -> bool | None:
    """Last affirmative/negative token wins; None when no such token exists.

    The trigger templates ask for true/false but models sometimes say yes/no;
    both are accepted, case-insensitively.
    """
    verdict: bool | None = None
    for token in re.findall(r"[a-z]+", text.lower()):
        if token in AFFIRMATIVE_TOKENS:
            verdict = True
        elif token in NEGATIVE_TOKENS:
            verdict = False
    return verdict


def build_trigger_parts(query: Query, evidence: EvidenceSet,
                        percept: PerceptState) -> tuple[TextPart, ...]:
    """Prompt body shared by all trigger strategies. Options are never included."""
    context = evidence.rendered_context or "(no memory entries)"
    body = (
        f"Memory context:\n{context}\n\n"
        f"Current observation:\n{render_percept(percept)}\n\n"
        f"Question: {query.text}"
    )
    return (TextPart(body),)


def _run_leg(template: TemplateId, parts: tuple[TextPart, ...],
             gateway: ModelGateway) -> tuple[str, bool | None, str | None]:
    """One gateway call: (raw text, parsed signal or None, error note or None)."""
    try:
        response = gateway.complete(ModelRequest(template, parts))
    except GatewayError as exc:
        return "", None, f"gateway_error: {exc}"
    signal = parse_boolean_signal(response.text)
    if signal is None:
        return response.text, None, "unparseable_output"
    return response.text, signal, None


def decide_binary(query: Query, evidence: EvidenceSet, percept: PerceptState,
                  gateway: ModelGateway) -> TriggerDecision:
    """Single yes/no sufficiency probe; affirmative responds, anything else defers."""
    parts = build_trigger_parts(query, evidence, percept)
    raw, signal, note = _run_leg(TemplateId.BINARY_TRIGGER, parts, gateway)
    return TriggerDecision(
        query_id=query.query_id,
        decided_at=percept.span[1],
        action=TriggerAction.RESPOND if signal else TriggerAction.DEFER,
        strategy=TriggerStrategy.BINARY_QA,
        raw_model_outputs=(raw,),
        parsed_signals=(bool(signal),),
        notes=(note,) if note else (),
    )


def decide_cot(query: Query, evidence: EvidenceSet, percept: PerceptState,
               gateway: ModelGateway) -> TriggerDecision:
    """Step-by-step evidence reasoning; only the final true/false token decides."""
    parts = build_trigger_parts(query, evidence, percept)
    raw, signal, note = _run_leg(TemplateId.COT_TRIGGER, parts, gateway)
    return TriggerDecision(
        query_id=query.query_id,
        decided_at=percept.span[1],
        action=TriggerAction.RESPOND if signal else TriggerAction.DEFER,
        strategy=TriggerStrategy.COT_REASONING,
        raw_model_outputs=(raw,),
        parsed_signals=(bool(signal),),
        notes=(note,) if note else (),
    )


def decide_adversarial(query: Query, evidence: EvidenceSet, percept: PerceptState,
                       gateway: ModelGateway) -> TriggerDecision:
    """Two independent probes: answerable? and should-be-rejected?

    Respond only on the consistent pair (answerable, not rejected). The other
    three signal combinations defer, as does any failed or unparseable leg:
    mutual "unanswerable" agreement is still a deferral, and contradiction
    means uncertainty.
    """
    parts = build_trigger_parts(query, evidence, percept)
    raw_a, sig_a, note_a = _run_leg(TemplateId.BINARY_TRIGGER, parts, gateway)
    raw_r, sig_r, note_r = _run_leg(TemplateId.ADVERSARIAL_REJECT, parts, gateway)
    legs_ok = sig_a is not None and sig_r is not None
    respond = legs_ok and sig_a and not sig_r
    notes = tuple(
        f"{leg}:{note}" for leg, note in (("answerable", note_a), ("reject", note_r))
        if note
    )
    return TriggerDecision(
        query_id=query.query_id,
        decided_at=percept.span[1],
        action=TriggerAction.RESPOND if respond else TriggerAction.DEFER,
        strategy=TriggerStrategy.ADVERSARIAL_VERIFICATION,
        raw_model_outputs=(raw_a, raw_r),
        parsed_signals=(bool(sig_a), bool(sig_r)),
        notes=notes,
    )


_DECIDERS = {
    TriggerStrategy.BINARY_QA: decide_binary,
    TriggerStrategy.COT_REASONING: decide_cot,
    TriggerStrategy.ADVERSARIAL_VERIFICATION: decide_adversarial,
}


def run_trigger(strategy: TriggerStrategy | str, query: Query, evidence: EvidenceSet,
                percept: PerceptState, gateway: ModelGateway) -> TriggerDecision:
    return _DECIDERS[TriggerStrategy(strategy)](query, evidence, percept, gateway)
