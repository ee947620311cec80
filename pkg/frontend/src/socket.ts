// Reconnecting WebSocket client.  All environment touchpoints (socket
// construction, timers) are injectable so the reconnect behaviour is fully
// testable without a network.

import { backoffDelayMs } from "./backoff.js";
import { parseServerFrame, type CommandMessage, type ServerFrame } from "./protocol.js";

export interface WebSocketLike {
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  onmessage: ((event: { data: string }) => void) | null;
  send(data: string): void;
  close(): void;
}

export interface SocketHooks {
  onFrame(frame: ServerFrame): void;
  onProtocolError(message: string): void;
  onConnection(connected: boolean): void;
}

export interface SocketOptions {
  wsFactory?: (url: string) => WebSocketLike;
  setTimer?: (fn: () => void, ms: number) => unknown;
  clearTimer?: (handle: unknown) => void;
}

export class ReconnectingSocket {
  private readonly url: string;
  private readonly hooks: SocketHooks;
  private readonly wsFactory: (url: string) => WebSocketLike;
  private readonly setTimer: (fn: () => void, ms: number) => unknown;
  private readonly clearTimer: (handle: unknown) => void;

  private socket: WebSocketLike | null = null;
  private open = false;
  private attempts = 0;
  private timer: unknown = null;
  private closed = false;

  constructor(url: string, hooks: SocketHooks, options: SocketOptions = {}) {
    this.url = url;
    this.hooks = hooks;
    this.wsFactory =
      options.wsFactory ?? ((target) => new WebSocket(target) as unknown as WebSocketLike);
    this.setTimer = options.setTimer ?? ((fn, ms) => setTimeout(fn, ms));
    this.clearTimer = options.clearTimer ?? ((handle) => clearTimeout(handle as number));
  }

  connect(): void {
    if (this.closed) return;
    const socket = this.wsFactory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.open = true;
      this.attempts = 0;
      this.hooks.onConnection(true);
    };
    socket.onmessage = (event) => {
      try {
        this.hooks.onFrame(parseServerFrame(event.data));
      } catch (err) {
        this.hooks.onProtocolError(err instanceof Error ? err.message : String(err));
      }
    };
    socket.onerror = () => {
      // close follows; nothing to do here
    };
    socket.onclose = () => {
      const wasOpen = this.open;
      this.open = false;
      this.socket = null;
      if (wasOpen) this.hooks.onConnection(false);
      this.scheduleReconnect();
    };
  }

  private scheduleReconnect(): void {
    if (this.closed || this.timer !== null) return;
    const delay = backoffDelayMs(this.attempts);
    this.attempts += 1;
    this.timer = this.setTimer(() => {
      this.timer = null;
      this.connect();
    }, delay);
  }

  get isOpen(): boolean {
    return this.open;
  }

  send(message: CommandMessage): boolean {
    if (!this.open || this.socket === null) return false;
    this.socket.send(JSON.stringify(message));
    return true;
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) {
      this.clearTimer(this.timer);
      this.timer = null;
    }
    this.socket?.close();
  }
}
