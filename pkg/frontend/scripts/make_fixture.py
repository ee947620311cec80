#!/usr/bin/env python3
"""Record a snapshot stream fixture from the simulation kernel.

Runs the stock 25-part scenario and captures a snapshot at every tick
where the observable state changed (phase, safety mode, measurement count,
or light tower), which is a superset of what a live client would see.
Writes tests/fixtures/snapshot_stream.json.
"""

import json
from pathlib import Path

from acat.simkernel import WorkCell, default_scenario


def main() -> None:
    cell = WorkCell(default_scenario())
    frames = [cell.snapshot()]

    def signature(snap):
        return (
            snap["cycle"]["phase"],
            snap["safety"]["mode"],
            snap["measurement_count"],
            tuple(sorted(snap["light_tower"].items())),
            snap["cycle"]["parts_done"],
        )

    last = signature(frames[0])
    while True:
        busy = cell.step_tick()
        snap = cell.snapshot()
        sig = signature(snap)
        if sig != last:
            frames.append(snap)
            last = sig
        if cell.terminal:
            frames.append(snap)
            break
        cell.advance_clock(True, busy)

    out = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "snapshot_stream.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(frames, indent=1), encoding="utf-8")
    print(f"wrote {out} ({len(frames)} frames, "
          f"{frames[-1]['measurement_count']} measurements)")


if __name__ == "__main__":
    main()
