"""Append-only event log with a canonical JSON Lines form.

Each record serializes as one line with the fixed key order
``{"seq":..,"t_us":..,"source":..,"kind":..,"payload":{...}}`` and compact
separators, so two identical runs produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

# Event kinds that represent a drive or solenoid being energized; the
# safety acceptance checks assert none of these appear after a fault tick.
ENERGIZE_KINDS = frozenset(
    {"move_start", "home_start", "z_command", "grip_on", "dispense_start", "pump_start"}
)


@dataclass(frozen=True)
class EventRecord:
    seq: int
    t_us: int
    source: str
    kind: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "seq": self.seq,
                "t_us": self.t_us,
                "source": self.source,
                "kind": self.kind,
                "payload": self.payload,
            },
            separators=(",", ":"),
        )


class EventLog:
    """Strictly ordered record sink; records are immutable once emitted."""

    def __init__(self):
        self._records: list[EventRecord] = []

    def emit(self, t_us: int, source: str, kind: str, payload: dict | None = None) -> EventRecord:
        record = EventRecord(
            seq=len(self._records),
            t_us=t_us,
            source=source,
            kind=kind,
            payload=payload if payload is not None else {},
        )
        self._records.append(record)
        return record

    @property
    def records(self) -> list[EventRecord]:
        return list(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def to_jsonl(self) -> str:
        return "".join(record.to_json() + "\n" for record in self._records)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


def read_jsonl(path: str | Path) -> list[EventRecord]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        records.append(
            EventRecord(raw["seq"], raw["t_us"], raw["source"], raw["kind"], raw["payload"])
        )
    return records
