import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { join } from "node:path";

import { decide } from "../src/controls.js";
import { isValidCommand, parseSnapshot, type Snapshot } from "../src/protocol.js";
import {
  applyConnection,
  applySnapshot,
  initialPanelState,
  type PanelState,
} from "../src/state.js";

const frames: Snapshot[] = JSON.parse(
  readFileSync(join(__dirname, "fixtures", "snapshot_stream.json"), "utf-8"),
).map(parseSnapshot);

const idleFrame = frames[0]!;
const runningFrame = frames.find((f) => f.cycle.phase === "picking")!;

function connected(snapshot: Snapshot): PanelState {
  return applySnapshot(applyConnection(initialPanelState(), "connected"), snapshot);
}

function estopLatchedState(): PanelState {
  const latched = {
    ...idleFrame,
    safety: { mode: "faulted", fault_cause: "estop", mcr_energized: false, red_light: true },
  } as Snapshot;
  return connected(latched);
}

describe("decide", () => {
  it("start while idle puts a start command on the wire", () => {
    const { commands } = decide("start", connected(idleFrame));
    expect(commands.map((c) => c.kind)).toEqual(["start"]);
    expect(commands.every(isValidCommand)).toBe(true);
  });

  it("start while running is locally refused", () => {
    const { commands } = decide("start", connected(runningFrame));
    expect(commands).toEqual([]);
  });

  it("estop fires even when other controls are disabled", () => {
    const { commands } = decide("estop", estopLatchedState());
    expect(commands.map((c) => c.kind)).toEqual(["estop"]);
  });

  it("reset without the latch-acknowledge gesture sends nothing", () => {
    const { commands, state } = decide("reset", estopLatchedState());
    expect(commands).toEqual([]);
    expect(state.notice).toMatch(/twist/i);
  });

  it("two-step gesture: arm then reset sends estop_release + reset", () => {
    const armed = decide("arm_release", estopLatchedState());
    expect(armed.commands).toEqual([]);
    expect(armed.state.releaseArmed).toBe(true);
    const { commands, state } = decide("reset", armed.state);
    expect(commands.map((c) => c.kind)).toEqual(["estop_release", "reset"]);
    expect(commands.every(isValidCommand)).toBe(true);
    expect(state.releaseArmed).toBe(false);
  });

  it("reset for a non-estop fault needs no gesture", () => {
    const doorFault = {
      ...idleFrame,
      safety: { mode: "faulted", fault_cause: "door_open", mcr_energized: false, red_light: true },
    } as Snapshot;
    const { commands } = decide("reset", connected(doorFault));
    expect(commands.map((c) => c.kind)).toEqual(["reset"]);
  });

  it("arm_release without a latch is a no-op", () => {
    const { commands, state } = decide("arm_release", connected(idleFrame));
    expect(commands).toEqual([]);
    expect(state.releaseArmed).toBe(false);
  });

  it("disconnected commands are refused with a banner", () => {
    const offline = applyConnection(connected(idleFrame), "reconnecting");
    const { commands, state } = decide("start", offline);
    expect(commands).toEqual([]);
    expect(state.notice).toMatch(/not connected/);
  });

  it("door toggles map to door commands", () => {
    expect(decide("door_open", connected(idleFrame)).commands[0]!.kind).toBe("door_open");
    expect(decide("door_close", connected(idleFrame)).commands[0]!.kind).toBe("door_close");
  });
});
