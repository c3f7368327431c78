// WebSocket session client with seq-based resume. On any seq gap or
// reconnect it resubscribes from the last applied seq, so the projection
// never silently misses a frame.

import { ServerFrame, isBroadcast } from "./protocol.js";
import { SessionStore } from "./store.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((event: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientOptions {
  url: string;
  store: SessionStore;
  socketFactory?: SocketFactory;
  reconnectDelayMs?: number;
  scheduler?: (fn: () => void, ms: number) => void;
}

export class SessionClient {
  private readonly url: string;
  private readonly store: SessionStore;
  private readonly factory: SocketFactory;
  private readonly reconnectDelayMs: number;
  private readonly schedule: (fn: () => void, ms: number) => void;
  private socket: SocketLike | null = null;
  private closed = false;
  resubscribeCount = 0;

  constructor(options: ClientOptions) {
    this.url = options.url;
    this.store = options.store;
    this.factory =
      options.socketFactory ??
      ((url) => new WebSocket(url) as unknown as SocketLike);
    this.reconnectDelayMs = options.reconnectDelayMs ?? 1000;
    this.schedule = options.scheduler ?? ((fn, ms) => setTimeout(fn, ms));
  }

  connect(): void {
    this.closed = false;
    this.store.setConnection("connecting");
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.store.setConnection("connected");
    };
    socket.onmessage = (event) => this.handleMessage(event.data);
    socket.onerror = () => {
      this.store.setConnection("disconnected", "connection error");
    };
    socket.onclose = () => {
      this.socket = null;
      if (this.closed) return;
      this.store.setConnection("disconnected", "connection lost, retrying");
      this.schedule(() => {
        if (!this.closed) this.connect();
      }, this.reconnectDelayMs);
    };
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
    this.socket = null;
  }

  private send(frame: object): void {
    this.socket?.send(JSON.stringify(frame));
  }

  private subscribeFrom(afterSeq: number): void {
    this.resubscribeCount += 1;
    this.send({ type: "subscribe", after_seq: afterSeq });
  }

  private handleMessage(data: string): void {
    let frame: ServerFrame;
    try {
      frame = JSON.parse(data) as ServerFrame;
    } catch {
      this.store.setConnection("connected", "unreadable frame from server");
      return;
    }
    if (frame.type === "hello") {
      // fresh connection (or server restart): resume from what we have
      this.subscribeFrom(this.store.lastSeq);
      return;
    }
    if (frame.type === "query_accepted") {
      this.store.reconcileAccepted(frame);
      return;
    }
    if (frame.type === "error") {
      this.store.banner = `${frame.code}: ${frame.message}`;
      if (frame.code === "EmptyQuery" || frame.code === "SessionOver") {
        this.store.markRejected("", frame.message);
      }
      this.store.setConnection(this.store.connection, this.store.banner);
      return;
    }
    if (isBroadcast(frame)) {
      const result = this.store.applyFrame(frame);
      if (result === "gap") {
        // missing frames: replay everything after the last applied seq
        this.subscribeFrom(this.store.lastSeq);
      }
    }
  }

  submitQuery(text: string): boolean {
    const trimmed = text.trim();
    if (!trimmed) return false; // client-side validation: no frame sent
    this.store.submitLocal(trimmed);
    this.send({ type: "submit_query", text: trimmed });
    return true;
  }

  start(): void {
    this.send({ type: "start" });
  }

  pause(): void {
    this.send({ type: "pause" });
  }

  resume(): void {
    this.send({ type: "resume" });
  }
}
