// Pure projection of server frames into UI state. Every timestamp and label
// shown comes from a frame; nothing temporal is computed client-side. Frames
// apply strictly in seq order: duplicates are dropped, gaps are refused so
// the client can resubscribe and replay the missing range.

import {
  AnsweredFrame,
  BroadcastFrame,
  ChunkFrame,
  QueryAcceptedFrame,
  QueryAdmittedFrame,
  TriggerDecidedFrame,
  isBroadcast,
} from "./protocol.js";

export type CardState = "pending" | "answered" | "forced";

export interface DecisionEntry {
  time: number;
  strategy: string;
  action: "respond" | "defer";
  rationale: string;
}

export interface EvidenceEntry {
  span: [number, number];
  snippet: string;
}

export interface QueryCard {
  queryId: string;
  text: string;
  submittedAt: number | null; // authoritative arrival time from query_admitted
  state: CardState;
  optimistic: boolean;
  decisions: DecisionEntry[];
  answer: { label: string; respondedAt: number; parseFailure: boolean } | null;
  evidencePreview: EvidenceEntry[];
  error: string | null;
}

export type ApplyResult = "applied" | "duplicate" | "gap";

export class SessionStore {
  lastSeq = -1;
  streamClock = 0;
  ended = false;
  forcedCount = 0;
  connection: "connecting" | "connected" | "disconnected" = "connecting";
  banner: string | null = null;

  private chunks: ChunkFrame[] = [];
  private cards = new Map<string, QueryCard>();
  private optimisticQueue: QueryCard[] = [];
  private listeners: (() => void)[] = [];

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  get timeline(): ChunkFrame[] {
    // render order is span order no matter how frames arrived
    return [...this.chunks].sort((a, b) => a.span[0] - b.span[0]);
  }

  get queryCards(): QueryCard[] {
    const admitted = [...this.cards.values()];
    return [...admitted, ...this.optimisticQueue];
  }

  card(queryId: string): QueryCard | undefined {
    return this.cards.get(queryId);
  }

  setConnection(state: "connecting" | "connected" | "disconnected",
                banner: string | null = null): void {
    this.connection = state;
    this.banner = banner;
    this.notify();
  }

  // --- optimistic submission ---

  submitLocal(text: string): QueryCard {
    const card: QueryCard = {
      queryId: `local-${this.optimisticQueue.length}-${Date.now()}`,
      text,
      submittedAt: null,
      state: "pending",
      optimistic: true,
      decisions: [],
      answer: null,
      evidencePreview: [],
      error: null,
    };
    this.optimisticQueue.push(card);
    this.notify();
    return card;
  }

  markRejected(text: string, message: string): void {
    const card = this.optimisticQueue.find((c) => c.text === text && !c.error);
    if (card) {
      card.error = message;
      this.notify();
    }
  }

  reconcileAccepted(frame: QueryAcceptedFrame): void {
    // the server's query_id becomes the card's identity
    const index = this.optimisticQueue.findIndex(
      (c) => c.text === frame.text && !c.error,
    );
    const card = index >= 0 ? this.optimisticQueue.splice(index, 1)[0] : {
      queryId: frame.query_id,
      text: frame.text,
      submittedAt: null,
      state: "pending" as CardState,
      optimistic: true,
      decisions: [],
      answer: null,
      evidencePreview: [],
      error: null,
    };
    card.queryId = frame.query_id;
    this.cards.set(frame.query_id, card);
    this.notify();
  }

  // --- frame application ---

  applyFrame(frame: BroadcastFrame): ApplyResult {
    if (!isBroadcast(frame)) return "duplicate";
    if (frame.seq <= this.lastSeq) return "duplicate";
    if (frame.seq > this.lastSeq + 1) return "gap";
    this.lastSeq = frame.seq;
    switch (frame.type) {
      case "chunk":
        this.chunks.push(frame);
        this.streamClock = frame.t;
        break;
      case "query_admitted":
        this.applyAdmitted(frame);
        break;
      case "trigger_decided":
        this.applyDecision(frame);
        break;
      case "answered":
        this.applyAnswered(frame);
        break;
      case "stream_ended":
        this.ended = true;
        this.forcedCount = frame.forced_count;
        this.streamClock = frame.t;
        break;
    }
    this.notify();
    return "applied";
  }

  private ensureCard(queryId: string, text: string): QueryCard {
    let card = this.cards.get(queryId);
    if (!card) {
      card = {
        queryId,
        text,
        submittedAt: null,
        state: "pending",
        optimistic: false,
        decisions: [],
        answer: null,
        evidencePreview: [],
        error: null,
      };
      this.cards.set(queryId, card);
    }
    return card;
  }

  private applyAdmitted(frame: QueryAdmittedFrame): void {
    const card = this.ensureCard(frame.query_id, frame.text);
    card.optimistic = false;
    card.submittedAt = frame.arrival_time; // server value is authoritative
    card.state = card.answer ? card.state : "pending";
  }

  private applyDecision(frame: TriggerDecidedFrame): void {
    const card = this.ensureCard(frame.query_id, "");
    const rationale = frame.raw_outputs.length
      ? frame.raw_outputs[frame.raw_outputs.length - 1]
      : frame.notes.join("; ");
    card.decisions.push({
      time: frame.t,
      strategy: frame.strategy,
      action: frame.action,
      rationale,
    });
  }

  private applyAnswered(frame: AnsweredFrame): void {
    const card = this.ensureCard(frame.query_id, "");
    card.state = frame.forced ? "forced" : "answered";
    card.answer = {
      label: frame.answer_label,
      respondedAt: frame.responded_at,
      parseFailure: frame.parse_failure,
    };
    card.evidencePreview = frame.grounding.items
      .map(([snapshotId]) => {
        const chunk = this.chunks.find((c) => c.snapshot_id === snapshotId);
        return chunk
          ? { span: chunk.span, snippet: chunk.caption ?? `snapshot ${snapshotId}` }
          : null;
      })
      .filter((entry): entry is EvidenceEntry => entry !== null)
      .sort((a, b) => a.span[0] - b.span[0]);
  }

  deferCount(queryId: string): number {
    const card = this.cards.get(queryId);
    if (!card) return 0;
    return card.decisions.filter((d) => d.action === "defer").length;
  }

  latestRationale(queryId: string): string | null {
    const card = this.cards.get(queryId);
    if (!card || card.decisions.length === 0) return null;
    return card.decisions[card.decisions.length - 1].rationale;
  }
}
