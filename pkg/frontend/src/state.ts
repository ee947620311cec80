// Panel state: a pure fold over socket events.  Every displayed field maps
// to a snapshot field; the only local additions are the connection status,
// the e-stop release arming (the two-step reset gesture), and the
// accumulated measurement history keyed by part id.

import type { Measurement, Snapshot } from "./protocol.js";

export type Connection = "connected" | "reconnecting";

export interface PanelState {
  connection: Connection;
  snapshot: Snapshot | null;
  estopLatched: boolean;
  releaseArmed: boolean;
  measurements: Measurement[];
  protocolError: string | null;
  notice: string | null;
}

export function initialPanelState(): PanelState {
  return {
    connection: "reconnecting",
    snapshot: null,
    estopLatched: false,
    releaseArmed: false,
    measurements: [],
    protocolError: null,
    notice: null,
  };
}

function mergeMeasurement(history: Measurement[], incoming: Measurement): Measurement[] {
  if (history.some((m) => m.part_id === incoming.part_id)) return history;
  const merged = [...history, incoming];
  merged.sort((a, b) => a.part_id - b.part_id);
  return merged;
}

export function applySnapshot(state: PanelState, snapshot: Snapshot): PanelState {
  let measurements = state.measurements;
  if (snapshot.measurement_count < measurements.length) {
    measurements = []; // a fresh batch started; drop the old table
  }
  if (snapshot.last_measurement !== null) {
    measurements = mergeMeasurement(measurements, snapshot.last_measurement);
  }
  const estopLatched =
    snapshot.safety.mode !== "run" && snapshot.safety.fault_cause === "estop";
  return {
    ...state,
    snapshot,
    measurements,
    estopLatched,
    // arming only survives while the latch persists
    releaseArmed: state.releaseArmed && estopLatched,
    protocolError: null,
  };
}

export function applyProtocolError(state: PanelState, message: string): PanelState {
  return { ...state, protocolError: message };
}

export function applyConnection(state: PanelState, connection: Connection): PanelState {
  return { ...state, connection, notice: null };
}

export function applyNotice(state: PanelState, notice: string | null): PanelState {
  return { ...state, notice };
}

export function armRelease(state: PanelState): PanelState {
  if (!state.estopLatched) return state;
  return { ...state, releaseArmed: true, notice: null };
}

export interface ControlsEnabled {
  start: boolean;
  stop: boolean;
  estop: boolean;
  reset: boolean;
  door: boolean;
}

const RESTARTABLE_PHASES = new Set(["idle", "complete", "faulted"]);

export function controlsFor(state: PanelState): ControlsEnabled {
  const connected = state.connection === "connected";
  const snapshot = state.snapshot;
  if (!connected || snapshot === null) {
    return { start: false, stop: false, estop: connected, reset: false, door: false };
  }
  const inRun = snapshot.safety.mode === "run";
  const phase = snapshot.cycle.phase;
  return {
    start: inRun && RESTARTABLE_PHASES.has(phase),
    stop: inRun && !RESTARTABLE_PHASES.has(phase) && phase !== "stopping",
    // the mushroom is operable in every state where the socket is open
    estop: true,
    reset: snapshot.safety.mode !== "run",
    door: true,
  };
}
