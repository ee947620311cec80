// Operator actions to wire commands.  Pure decision logic: given the
// current panel state and a pressed control, decide which command frames
// go out and how the local state changes.  The e-stop reset is two-step:
// the latched mushroom must first be "twisted" (arm_release) before the
// reset button will emit estop_release + reset.

import { buildCommand, type CommandMessage } from "./protocol.js";
import { armRelease, applyNotice, controlsFor, type PanelState } from "./state.js";

export type PanelAction =
  | "start"
  | "stop"
  | "estop"
  | "arm_release"
  | "reset"
  | "door_open"
  | "door_close";

export interface Decision {
  commands: CommandMessage[];
  state: PanelState;
}

export function decide(action: PanelAction, state: PanelState, clientId = "panel"): Decision {
  if (state.connection !== "connected") {
    return {
      commands: [],
      state: applyNotice(state, "not connected: command refused"),
    };
  }
  const enabled = controlsFor(state);

  switch (action) {
    case "start":
      if (!enabled.start) return { commands: [], state };
      return { commands: [buildCommand("start", {}, clientId)], state };
    case "stop":
      if (!enabled.stop) return { commands: [], state };
      return { commands: [buildCommand("stop", {}, clientId)], state };
    case "estop":
      // always deliverable while the socket is open
      return { commands: [buildCommand("estop", {}, clientId)], state };
    case "arm_release":
      if (!state.estopLatched) return { commands: [], state };
      return { commands: [], state: armRelease(state) };
    case "reset": {
      if (!enabled.reset) return { commands: [], state };
      if (state.estopLatched && !state.releaseArmed) {
        return {
          commands: [],
          state: applyNotice(state, "twist the e-stop to release it before resetting"),
        };
      }
      const commands = state.estopLatched
        ? [buildCommand("estop_release", {}, clientId), buildCommand("reset", {}, clientId)]
        : [buildCommand("reset", {}, clientId)];
      return { commands, state: { ...state, releaseArmed: false, notice: null } };
    }
    case "door_open":
      return { commands: [buildCommand("door_open", {}, clientId)], state };
    case "door_close":
      return { commands: [buildCommand("door_close", {}, clientId)], state };
  }
}
