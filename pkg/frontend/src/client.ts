// Resilient stream client: reconnects with exponential backoff and keeps
// only the freshest state for the render loop, which must never block on
// the network.

import { parseStateMessage, StateMessage } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientOptions {
  backoffInitialMs?: number;
  backoffCapMs?: number;
  socketFactory?: SocketFactory;
  setTimeoutFn?: typeof setTimeout;
  now?: () => number;
}

export class StreamClient {
  readonly url: string;
  connected = false;
  droppedMessages = 0;
  lastState: StateMessage | null = null;
  lastMessageAt = -Infinity;
  currentBackoffMs: number;
  onState: ((s: StateMessage) => void) | null = null;

  private socket: SocketLike | null = null;
  private stopped = false;
  private readonly initialBackoff: number;
  private readonly backoffCap: number;
  private readonly factory: SocketFactory;
  private readonly setTimeoutFn: typeof setTimeout;
  private readonly now: () => number;

  constructor(url: string, opts: ClientOptions = {}) {
    this.url = url;
    this.initialBackoff = opts.backoffInitialMs ?? 500;
    this.backoffCap = opts.backoffCapMs ?? 8000;
    this.currentBackoffMs = this.initialBackoff;
    this.factory = opts.socketFactory ??
      ((u) => new WebSocket(u) as unknown as SocketLike);
    this.setTimeoutFn = opts.setTimeoutFn ?? setTimeout;
    this.now = opts.now ?? (() => Date.now());
  }

  connect(): void {
    if (this.stopped) return;
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.connected = true;
      this.currentBackoffMs = this.initialBackoff;
    };
    socket.onmessage = (event) => {
      const state = parseStateMessage(String(event.data));
      if (state === null) {
        this.droppedMessages += 1;
        return;
      }
      this.lastState = state;
      this.lastMessageAt = this.now();
      if (this.onState) this.onState(state);
    };
    const onDown = () => {
      if (this.socket !== socket) return;
      this.socket = null;
      this.connected = false;
      this.scheduleReconnect();
    };
    socket.onclose = onDown;
    socket.onerror = onDown;
  }

  private scheduleReconnect(): void {
    if (this.stopped) return;
    const delay = this.currentBackoffMs;
    this.currentBackoffMs = Math.min(this.currentBackoffMs * 2, this.backoffCap);
    this.setTimeoutFn(() => this.connect(), delay);
  }

  send(payload: string): boolean {
    if (!this.connected || this.socket === null) return false;
    try {
      this.socket.send(payload);
      return true;
    } catch {
      return false;
    }
  }

  /** Seconds since the last valid state, for the staleness banner. */
  staleness(): number {
    return (this.now() - this.lastMessageAt) / 1000;
  }

  close(): void {
    this.stopped = true;
    if (this.socket !== null) this.socket.close();
  }
}
