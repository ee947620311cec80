"""Deterministic discrete-event kernel: clock, scenarios, injections, log."""

from .cell import RunResult, WorkCell, run_scenario
from .events import ENERGIZE_KINDS, EventLog, EventRecord, read_jsonl
from .rng import random_stream, stream_key
from .scenario import (
    INJECTION_KINDS,
    Injection,
    Scenario,
    default_scenario,
    load_scenario,
    scenario_from_dict,
)

__all__ = [
    "ENERGIZE_KINDS",
    "EventLog",
    "EventRecord",
    "INJECTION_KINDS",
    "Injection",
    "RunResult",
    "Scenario",
    "WorkCell",
    "default_scenario",
    "load_scenario",
    "random_stream",
    "read_jsonl",
    "run_scenario",
    "scenario_from_dict",
    "stream_key",
]
