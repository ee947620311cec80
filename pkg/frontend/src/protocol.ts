// Wire protocol v1 for the work-cell gateway: JSON text frames over one
// WebSocket.  The panel never invents state, so parsing is strict: a frame
// that does not match the schema is rejected and surfaced as a protocol
// error rather than partially applied.

export const PROTOCOL_VERSION = 1;

export const COMMAND_KINDS = [
  "start",
  "stop",
  "estop",
  "estop_release",
  "reset",
  "door_open",
  "door_close",
  "inject",
] as const;

export type CommandKind = (typeof COMMAND_KINDS)[number];

export interface LightTower {
  green: boolean;
  amber: boolean;
  red: boolean;
}

export interface SafetySummary {
  mode: "run" | "faulted" | "await_reset";
  fault_cause: string | null;
  mcr_energized: boolean;
  red_light: boolean;
}

export interface CycleSummary {
  phase: string;
  column: number;
  row: number;
  parts_done: number;
  total_parts: number;
}

export interface Measurement {
  part_id: number;
  theta_deg: number;
  rms_mm: number;
  t_us: number;
}

export interface Snapshot {
  type: "snapshot";
  v: number;
  t_us: number;
  safety: SafetySummary;
  cycle: CycleSummary;
  axes: Record<string, number | null>;
  z: string;
  gripper: { venturi_on: boolean; gripped: boolean };
  reservoir_ml: number;
  light_tower: LightTower;
  last_measurement: Measurement | null;
  measurement_count: number;
}

export interface ErrorFrame {
  type: "error";
  v: number;
  message: string;
}

export type ServerFrame = Snapshot | ErrorFrame;

export class ProtocolError extends Error {}

function isObject(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function expectBool(obj: Record<string, unknown>, key: string): boolean {
  const value = obj[key];
  if (typeof value !== "boolean") throw new ProtocolError(`field ${key} must be boolean`);
  return value;
}

function expectNumber(obj: Record<string, unknown>, key: string): number {
  const value = obj[key];
  if (typeof value !== "number" || !Number.isFinite(value)) {
    throw new ProtocolError(`field ${key} must be a number`);
  }
  return value;
}

function expectString(obj: Record<string, unknown>, key: string): string {
  const value = obj[key];
  if (typeof value !== "string") throw new ProtocolError(`field ${key} must be a string`);
  return value;
}

function parseMeasurement(raw: unknown): Measurement {
  if (!isObject(raw)) throw new ProtocolError("last_measurement must be an object");
  return {
    part_id: expectNumber(raw, "part_id"),
    theta_deg: expectNumber(raw, "theta_deg"),
    rms_mm: expectNumber(raw, "rms_mm"),
    t_us: expectNumber(raw, "t_us"),
  };
}

export function parseSnapshot(raw: unknown): Snapshot {
  if (!isObject(raw)) throw new ProtocolError("snapshot must be an object");
  if (raw.type !== "snapshot") throw new ProtocolError("not a snapshot frame");
  if (raw.v !== PROTOCOL_VERSION) throw new ProtocolError(`unsupported protocol version ${raw.v}`);
  const safetyRaw = raw.safety;
  if (!isObject(safetyRaw)) throw new ProtocolError("missing safety block");
  const mode = safetyRaw.mode;
  if (mode !== "run" && mode !== "faulted" && mode !== "await_reset") {
    throw new ProtocolError(`unknown safety mode ${String(mode)}`);
  }
  const cause = safetyRaw.fault_cause;
  if (cause !== null && typeof cause !== "string") {
    throw new ProtocolError("fault_cause must be string or null");
  }
  const cycleRaw = raw.cycle;
  if (!isObject(cycleRaw)) throw new ProtocolError("missing cycle block");
  const towerRaw = raw.light_tower;
  if (!isObject(towerRaw)) throw new ProtocolError("missing light_tower block");
  const gripperRaw = raw.gripper;
  if (!isObject(gripperRaw)) throw new ProtocolError("missing gripper block");
  const axesRaw = raw.axes;
  if (!isObject(axesRaw)) throw new ProtocolError("missing axes block");
  const axes: Record<string, number | null> = {};
  for (const [name, value] of Object.entries(axesRaw)) {
    if (value !== null && typeof value !== "number") {
      throw new ProtocolError(`axis ${name} must be number or null`);
    }
    axes[name] = value;
  }
  return {
    type: "snapshot",
    v: PROTOCOL_VERSION,
    t_us: expectNumber(raw, "t_us"),
    safety: {
      mode,
      fault_cause: cause,
      mcr_energized: expectBool(safetyRaw, "mcr_energized"),
      red_light: expectBool(safetyRaw, "red_light"),
    },
    cycle: {
      phase: expectString(cycleRaw, "phase"),
      column: expectNumber(cycleRaw, "column"),
      row: expectNumber(cycleRaw, "row"),
      parts_done: expectNumber(cycleRaw, "parts_done"),
      total_parts: expectNumber(cycleRaw, "total_parts"),
    },
    axes,
    z: expectString(raw, "z"),
    gripper: {
      venturi_on: expectBool(gripperRaw, "venturi_on"),
      gripped: expectBool(gripperRaw, "gripped"),
    },
    reservoir_ml: expectNumber(raw, "reservoir_ml"),
    light_tower: {
      green: expectBool(towerRaw, "green"),
      amber: expectBool(towerRaw, "amber"),
      red: expectBool(towerRaw, "red"),
    },
    last_measurement:
      raw.last_measurement === null || raw.last_measurement === undefined
        ? null
        : parseMeasurement(raw.last_measurement),
    measurement_count: expectNumber(raw, "measurement_count"),
  };
}

export function parseServerFrame(text: string): ServerFrame {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    throw new ProtocolError("frame is not valid JSON");
  }
  if (!isObject(raw)) throw new ProtocolError("frame must be a JSON object");
  if (raw.type === "error") {
    return { type: "error", v: PROTOCOL_VERSION, message: expectString(raw, "message") };
  }
  return parseSnapshot(raw);
}

export interface CommandMessage {
  type: "command";
  kind: CommandKind;
  params: Record<string, unknown>;
  client_id: string;
}

export function buildCommand(
  kind: CommandKind,
  params: Record<string, unknown> = {},
  clientId = "panel",
): CommandMessage {
  return { type: "command", kind, params, client_id: clientId };
}

export function isValidCommand(raw: unknown): raw is CommandMessage {
  if (!isObject(raw)) return false;
  return (
    raw.type === "command" &&
    typeof raw.kind === "string" &&
    (COMMAND_KINDS as readonly string[]).includes(raw.kind) &&
    isObject(raw.params) &&
    typeof raw.client_id === "string"
  );
}
