// DOM rendering: project the panel state onto the static layout in
// index.html.  Every rendered field comes straight from the last good
// snapshot; a protocol error only raises the banner and leaves the rest
// of the view untouched.

import { controlsFor, type PanelState } from "./state.js";

function byId<T extends HTMLElement>(root: ParentNode, id: string): T {
  const el = root.querySelector<T>(`#${id}`);
  if (el === null) throw new Error(`panel layout is missing #${id}`);
  return el;
}

function setLamp(root: ParentNode, id: string, lit: boolean): void {
  byId(root, id).classList.toggle("lit", lit);
}

function fmt(value: number | null | undefined, digits: number): string {
  return value === null || value === undefined ? "--" : value.toFixed(digits);
}

export function render(state: PanelState, root: ParentNode = document): void {
  const badge = byId(root, "conn-badge");
  badge.textContent = state.connection;
  badge.classList.toggle("connected", state.connection === "connected");

  const banner = byId(root, "banner");
  if (state.protocolError !== null) {
    banner.textContent = `protocol error: ${state.protocolError}`;
    banner.classList.add("visible");
  } else {
    banner.textContent = "";
    banner.classList.remove("visible");
  }

  const notice = byId(root, "notice");
  notice.textContent = state.notice ?? "";
  notice.classList.toggle("visible", state.notice !== null);

  const snapshot = state.snapshot;
  if (snapshot !== null) {
    setLamp(root, "lamp-green", snapshot.light_tower.green);
    setLamp(root, "lamp-amber", snapshot.light_tower.amber);
    setLamp(root, "lamp-red", snapshot.light_tower.red);

    byId(root, "phase-label").textContent = snapshot.cycle.phase;
    byId(root, "safety-label").textContent =
      snapshot.safety.mode === "run"
        ? "run"
        : `${snapshot.safety.mode} (${snapshot.safety.fault_cause ?? "?"})`;
    byId(root, "parts-label").textContent =
      `${snapshot.cycle.parts_done} / ${snapshot.cycle.total_parts}`;
    byId(root, "clock-label").textContent = `${(snapshot.t_us / 1_000_000).toFixed(3)} s`;

    byId(root, "pos-x").textContent = fmt(snapshot.axes["x_mm"], 2);
    byId(root, "pos-y").textContent = fmt(snapshot.axes["y_mm"], 2);
    byId(root, "pos-dispenser").textContent = fmt(snapshot.axes["dispenser_mm"], 2);
    byId(root, "pos-z").textContent = snapshot.z;
    byId(root, "reservoir-label").textContent = `${snapshot.reservoir_ml.toFixed(3)} mL`;

    const body = byId<HTMLTableSectionElement>(root, "meas-body");
    renderMeasurements(body, state);
  }

  const controls = controlsFor(state);
  byId<HTMLButtonElement>(root, "btn-start").disabled = !controls.start;
  byId<HTMLButtonElement>(root, "btn-stop").disabled = !controls.stop;
  byId<HTMLButtonElement>(root, "btn-estop").disabled = !controls.estop;
  byId<HTMLButtonElement>(root, "btn-reset").disabled = !controls.reset;
  byId<HTMLButtonElement>(root, "btn-door-open").disabled = !controls.door;
  byId<HTMLButtonElement>(root, "btn-door-close").disabled = !controls.door;

  const estop = byId<HTMLButtonElement>(root, "btn-estop");
  estop.classList.toggle("latched", state.estopLatched);
  estop.textContent = state.estopLatched
    ? state.releaseArmed
      ? "E-STOP (released)"
      : "E-STOP (latched - twist)"
    : "E-STOP";
}

function renderMeasurements(body: HTMLTableSectionElement, state: PanelState): void {
  // Rebuild only when the row count changes; rows are immutable once shown.
  if (body.childElementCount === state.measurements.length) return;
  const doc = body.ownerDocument;
  body.textContent = "";
  for (const m of state.measurements) {
    const tr = doc.createElement("tr");
    for (const cell of [
      String(m.part_id),
      m.theta_deg.toFixed(3),
      m.rms_mm.toFixed(6),
      (m.t_us / 1_000_000).toFixed(3),
    ]) {
      const td = doc.createElement("td");
      td.textContent = cell;
      tr.appendChild(td);
    }
    body.appendChild(tr);
  }
}
