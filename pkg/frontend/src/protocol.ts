// Wire frames exchanged with the session service. Broadcast frames carry a
// server-assigned monotone seq and mirror the session transcript's payloads
// field-for-field; per-connection frames (hello/accepted/error) carry none.

export interface ChunkFrame {
  type: "chunk";
  seq: number;
  t: number;
  chunk_index: number;
  span: [number, number];
  snapshot_id: number;
  caption: string | null;
  event_count: number;
}

export interface QueryAdmittedFrame {
  type: "query_admitted";
  seq: number;
  t: number;
  query_id: string;
  text: string;
  arrival_time: number;
  admitted_chunk: number;
}

export interface TriggerDecidedFrame {
  type: "trigger_decided";
  seq: number;
  t: number;
  query_id: string;
  chunk_index: number;
  strategy: string;
  action: "respond" | "defer";
  signals: boolean[];
  raw_outputs: string[];
  evidence_ids: number[];
  notes: string[];
}

export interface AnsweredFrame {
  type: "answered";
  seq: number;
  t: number;
  query_id: string;
  answer_label: string;
  responded_at: number;
  forced: boolean;
  parse_failure: boolean;
  grounding: { assembled_at: number; items: [number, number, string][] };
}

export interface StreamEndedFrame {
  type: "stream_ended";
  seq: number;
  t: number;
  chunk_count: number;
  forced_count: number;
}

export type BroadcastFrame =
  | ChunkFrame
  | QueryAdmittedFrame
  | TriggerDecidedFrame
  | AnsweredFrame
  | StreamEndedFrame;

export interface HelloFrame {
  type: "hello";
  state: string;
  last_seq: number;
}

export interface QueryAcceptedFrame {
  type: "query_accepted";
  query_id: string;
  text: string;
}

export interface ErrorFrame {
  type: "error";
  code: string;
  message: string;
  seq?: number | null;
}

export type ServerFrame = BroadcastFrame | HelloFrame | QueryAcceptedFrame | ErrorFrame;

export const BROADCAST_TYPES = new Set([
  "chunk",
  "query_admitted",
  "trigger_decided",
  "answered",
  "stream_ended",
]);

export function isBroadcast(frame: ServerFrame): frame is BroadcastFrame {
  return BROADCAST_TYPES.has(frame.type);
}
