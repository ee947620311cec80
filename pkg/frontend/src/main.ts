// Panel bootstrap: one socket, one state fold, one render sink.

import { decide, type PanelAction } from "./controls.js";
import {
  applyConnection,
  applyNotice,
  applyProtocolError,
  applySnapshot,
  initialPanelState,
  type PanelState,
} from "./state.js";
import { ReconnectingSocket } from "./socket.js";
import { render } from "./view.js";

function gatewayUrl(): string {
  const input = document.querySelector<HTMLInputElement>("#gateway-url");
  if (input !== null && input.value.trim() !== "") return input.value.trim();
  const host = window.location.hostname || "127.0.0.1";
  return `ws://${host}:8700/ws`;
}

let state: PanelState = initialPanelState();
let socket: ReconnectingSocket | null = null;

function update(next: PanelState): void {
  state = next;
  render(state);
}

function handleAction(action: PanelAction): void {
  const decision = decide(action, state, "operator-panel");
  let next = decision.state;
  for (const command of decision.commands) {
    if (socket === null || !socket.send(command)) {
      next = applyNotice(next, "not connected: command refused");
      break;
    }
  }
  update(next);
}

function connect(): void {
  socket?.close();
  update(applyConnection(initialPanelState(), "reconnecting"));
  socket = new ReconnectingSocket(gatewayUrl(), {
    onFrame: (frame) => {
      if (frame.type === "snapshot") {
        update(applySnapshot(state, frame));
      } else {
        update(applyNotice(state, `gateway: ${frame.message}`));
      }
    },
    onProtocolError: (message) => update(applyProtocolError(state, message)),
    onConnection: (connected) =>
      update(applyConnection(state, connected ? "connected" : "reconnecting")),
  });
  socket.connect();
}

const ACTIONS: Record<string, PanelAction> = {
  "btn-start": "start",
  "btn-stop": "stop",
  "btn-reset": "reset",
  "btn-door-open": "door_open",
  "btn-door-close": "door_close",
};

window.addEventListener("DOMContentLoaded", () => {
  for (const [id, action] of Object.entries(ACTIONS)) {
    document.getElementById(id)?.addEventListener("click", () => handleAction(action));
  }
  // Latched mushroom: first click fires the stop, clicks while latched arm
  // the release (the physical twist); reset then clears the fault.
  document.getElementById("btn-estop")?.addEventListener("click", () => {
    handleAction(state.estopLatched ? "arm_release" : "estop");
  });
  document.getElementById("btn-connect")?.addEventListener("click", connect);
  render(state);
  connect();
});
