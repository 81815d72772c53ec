// WebSocket connection with automatic reconnect and exponential backoff.
// The socket factory is injectable so the logic is testable without a
// browser or server.

import type { Envelope } from "./protocol.js";

export interface SocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  send(data: string): void;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ConnectionOptions {
  socketFactory?: SocketFactory;
  onMessage: (msg: Envelope) => void;
  onStatus?: (status: "connecting" | "connected" | "disconnected") => void;
  backoffBaseMs?: number;
  backoffMaxMs?: number;
  setTimeoutFn?: (fn: () => void, ms: number) => unknown;
}

export class Connection {
  private socket: SocketLike | null = null;
  private closed = false;
  attempts = 0;

  constructor(private url: string, private opts: ConnectionOptions) {}

  start(): void {
    this.closed = false;
    this.connect();
  }

  private connect(): void {
    const factory =
      this.opts.socketFactory ??
      ((url: string) => new WebSocket(url) as unknown as SocketLike);
    this.opts.onStatus?.("connecting");
    const socket = factory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.attempts = 0;
      this.opts.onStatus?.("connected");
    };
    socket.onmessage = (ev) => {
      let msg: Envelope;
      try {
        msg = JSON.parse(ev.data) as Envelope;
      } catch {
        return; // non-JSON frames are dropped
      }
      this.opts.onMessage(msg);
    };
    socket.onclose = () => this.scheduleReconnect();
    socket.onerror = () => {
      /* close always follows */
    };
  }

  backoffMs(): number {
    const base = this.opts.backoffBaseMs ?? 500;
    const cap = this.opts.backoffMaxMs ?? 8000;
    return Math.min(cap, base * 2 ** Math.min(this.attempts, 10));
  }

  private scheduleReconnect(): void {
    this.socket = null;
    this.opts.onStatus?.("disconnected");
    if (this.closed) return;
    const delay = this.backoffMs();
    this.attempts += 1;
    const later = this.opts.setTimeoutFn ?? setTimeout;
    later(() => {
      if (!this.closed) this.connect();
    }, delay);
  }

  send(data: string): boolean {
    if (!this.socket) return false;
    try {
      this.socket.send(data);
      return true;
    } catch {
      return false;
    }
  }

  stop(): void {
    this.closed = true;
    this.socket?.close();
    this.socket = null;
  }
}
