import { describe, expect, it } from "vitest";

import { BACKOFF_CAP_MS, backoffDelayMs } from "../src/backoff.js";
import { buildCommand, type ServerFrame } from "../src/protocol.js";
import { ReconnectingSocket, type WebSocketLike } from "../src/socket.js";

class FakeSocket implements WebSocketLike {
  onopen: (() => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;
  onmessage: ((event: { data: string }) => void) | null = null;
  sent: string[] = [];
  closed = false;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }
}

interface Timer {
  fn: () => void;
  ms: number;
}

function harness() {
  const sockets: FakeSocket[] = [];
  const timers: Timer[] = [];
  const frames: ServerFrame[] = [];
  const errors: string[] = [];
  const connections: boolean[] = [];
  const socket = new ReconnectingSocket(
    "ws://test/ws",
    {
      onFrame: (f) => frames.push(f),
      onProtocolError: (m) => errors.push(m),
      onConnection: (c) => connections.push(c),
    },
    {
      wsFactory: () => {
        const fake = new FakeSocket();
        sockets.push(fake);
        return fake;
      },
      setTimer: (fn, ms) => {
        timers.push({ fn, ms });
        return timers.length - 1;
      },
      clearTimer: () => undefined,
    },
  );
  return { socket, sockets, timers, frames, errors, connections };
}

describe("backoffDelayMs", () => {
  it("doubles from 250 ms and caps at 5 s", () => {
    expect([0, 1, 2, 3, 4, 5, 9].map(backoffDelayMs)).toEqual([
      250, 500, 1000, 2000, 4000, 5000, 5000,
    ]);
    expect(BACKOFF_CAP_MS).toBe(5000);
  });
});

describe("ReconnectingSocket", () => {
  it("dispatches parsed frames and reports protocol errors", () => {
    const h = harness();
    h.socket.connect();
    const fake = h.sockets[0]!;
    fake.onopen?.();
    expect(h.connections).toEqual([true]);
    fake.onmessage?.({ data: '{"type":"error","v":1,"message":"m"}' });
    expect(h.frames).toEqual([{ type: "error", v: 1, message: "m" }]);
    fake.onmessage?.({ data: "garbage" });
    expect(h.errors.length).toBe(1);
  });

  it("refuses sends while closed", () => {
    const h = harness();
    h.socket.connect();
    expect(h.socket.send(buildCommand("start"))).toBe(false);
    h.sockets[0]!.onopen?.();
    expect(h.socket.send(buildCommand("start"))).toBe(true);
    expect(JSON.parse(h.sockets[0]!.sent[0]!)).toMatchObject({ kind: "start" });
  });

  it("walks the backoff ladder across failed attempts", () => {
    const h = harness();
    h.socket.connect();
    // each close schedules a retry; firing the timer makes the next attempt
    const observed: number[] = [];
    for (let i = 0; i < 6; i += 1) {
      h.sockets[h.sockets.length - 1]!.onclose?.();
      const timer = h.timers[h.timers.length - 1]!;
      observed.push(timer.ms);
      timer.fn();
    }
    expect(observed).toEqual([250, 500, 1000, 2000, 4000, 5000]);
  });

  it("resets the ladder after a successful open", () => {
    const h = harness();
    h.socket.connect();
    h.sockets[0]!.onclose?.();
    expect(h.timers[0]!.ms).toBe(250);
    h.timers[0]!.fn();
    h.sockets[1]!.onopen?.();
    h.sockets[1]!.onclose?.();
    expect(h.timers[1]!.ms).toBe(250);
    expect(h.connections).toEqual([true, false]);
  });

  it("stops reconnecting after close()", () => {
    const h = harness();
    h.socket.connect();
    h.socket.close();
    const before = h.timers.length;
    h.sockets[0]!.onclose?.();
    expect(h.timers.length).toBe(before);
  });
});
