"""Dual-channel safety monitor: E-stops, door interlock, latched faults.

Each monitored device feeds two redundant contact channels.  Both channels
opening means the device tripped; the two channels disagreeing for longer
than the discrepancy window means a wiring or contact failure.  Either way
the monitor latches a fault, drops the master control relay (MCR), and
lights the red indicator until a manual reset is accepted.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import ConfigError

DEFAULT_DISCREPANCY_WINDOW_US = 500_000  # 500 ms, typical safety-relay class value


class SafetySource(Enum):
    ESTOP_OPERATOR = "estop_operator"
    ESTOP_MAIN = "estop_main"
    DOOR_INTERLOCK = "door_interlock"


class SafetyMode(Enum):
    RUN = "run"
    FAULTED = "faulted"
    AWAIT_RESET = "await_reset"


class FaultCause(Enum):
    ESTOP = "estop"
    DOOR_OPEN = "door_open"
    CHANNEL_DISCREPANCY = "channel_discrepancy"


# Deterministic blame order when several pairs trip in the same tick.
_SOURCE_ORDER = (
    SafetySource.ESTOP_OPERATOR,
    SafetySource.ESTOP_MAIN,
    SafetySource.DOOR_INTERLOCK,
)


@dataclass(frozen=True)
class SafetyChannelPair:
    """Both contact channels of one monitored device; closed means healthy."""

    source: SafetySource
    a_closed: bool
    b_closed: bool

    @property
    def tripped(self) -> bool:
        return not self.a_closed and not self.b_closed

    @property
    def discrepant(self) -> bool:
        return self.a_closed != self.b_closed

    @property
    def healthy(self) -> bool:
        return self.a_closed and self.b_closed


@dataclass(frozen=True)
class SafetyConfig:
    discrepancy_window_us: int = DEFAULT_DISCREPANCY_WINDOW_US
    reset_policy: str = "manual_only"
    performance_level: str = "PL c"  # informational metadata

    def __post_init__(self):
        if self.discrepancy_window_us <= 0:
            raise ConfigError("discrepancy window must be positive")
        if self.reset_policy != "manual_only":
            raise ConfigError("only manual reset is supported")


@dataclass(frozen=True)
class SafetyState:
    """Latched monitor output plus the discrepancy bookkeeping it carries.

    Invariants: mcr_energized only in RUN; red_light exactly when not in
    RUN; fault_cause present exactly when not in RUN.
    """

    mode: SafetyMode = SafetyMode.RUN
    fault_cause: FaultCause | None = None
    fault_source: SafetySource | None = None
    mcr_energized: bool = True
    red_light: bool = False
    faulted_at_us: int | None = None
    # source -> simulated time the pair started disagreeing
    discrepancy_since: tuple[tuple[SafetySource, int], ...] = ()


def initial_safety_state() -> SafetyState:
    return SafetyState()


def _run_state(discrepancy) -> SafetyState:
    return SafetyState(discrepancy_since=discrepancy)


def _latched_state(mode, cause, source, faulted_at_us, discrepancy) -> SafetyState:
    return SafetyState(
        mode=mode,
        fault_cause=cause,
        fault_source=source,
        mcr_energized=False,
        red_light=True,
        faulted_at_us=faulted_at_us,
        discrepancy_since=discrepancy,
    )


def step_safety(
    state: SafetyState,
    channels: list[SafetyChannelPair],
    reset_requested: bool,
    now_us: int,
    cfg: SafetyConfig,
) -> SafetyState:
    """Advance the monitor by one tick.

    Trip conditions are evaluated every tick regardless of mode, so a fault
    edge at tick t is reflected (MCR dropped) in the state returned for
    tick t.  A latched fault clears only through an explicit reset with all
    pairs healthy; the reset passes through AWAIT_RESET and re-arms on the
    following tick.
    """
    seen = {pair.source for pair in channels}
    missing = [src for src in _SOURCE_ORDER if src not in seen]
    if missing:
        raise ConfigError(f"channels missing sources: {[m.value for m in missing]}")

    by_source = {pair.source: pair for pair in channels}

    # Track how long each pair has disagreed.
    prev_since = dict(state.discrepancy_since)
    since: dict[SafetySource, int] = {}
    for src in _SOURCE_ORDER:
        if by_source[src].discrepant:
            since[src] = prev_since.get(src, now_us)
    discrepancy = tuple(sorted(since.items(), key=lambda kv: kv[0].value))

    # Demanded fault, in blame order: tripped pairs first, then stale discrepancies.
    demand: tuple[FaultCause, SafetySource] | None = None
    for src in _SOURCE_ORDER:
        if by_source[src].tripped:
            cause = FaultCause.DOOR_OPEN if src is SafetySource.DOOR_INTERLOCK else FaultCause.ESTOP
            demand = (cause, src)
            break
    if demand is None:
        for src in _SOURCE_ORDER:
            if src in since and now_us - since[src] >= cfg.discrepancy_window_us:
                demand = (FaultCause.CHANNEL_DISCREPANCY, src)
                break

    if demand is not None:
        if state.mode is SafetyMode.FAULTED:
            # Already latched: the first cause wins until cleared.
            return _latched_state(
                SafetyMode.FAULTED, state.fault_cause, state.fault_source,
                state.faulted_at_us, discrepancy,
            )
        cause, src = demand
        return _latched_state(SafetyMode.FAULTED, cause, src, now_us, discrepancy)

    all_healthy = all(pair.healthy for pair in channels)

    if state.mode is SafetyMode.RUN:
        return _run_state(discrepancy)

    if state.mode is SafetyMode.FAULTED:
        if all_healthy and reset_requested:
            return _latched_state(
                SafetyMode.AWAIT_RESET, state.fault_cause, state.fault_source,
                state.faulted_at_us, discrepancy,
            )
        return _latched_state(
            SafetyMode.FAULTED, state.fault_cause, state.fault_source,
            state.faulted_at_us, discrepancy,
        )

    # AWAIT_RESET with no demand: pairs held healthy one more tick, re-arm.
    if all_healthy:
        return _run_state(discrepancy)
    return _latched_state(
        SafetyMode.FAULTED, state.fault_cause, state.fault_source,
        state.faulted_at_us, discrepancy,
    )


def mcr_gate(state: SafetyState, requested: list) -> list:
    """Filter actuator commands through the master control relay.

    With the MCR de-energized every drive/solenoid command is replaced by
    its de-energize form; indicator commands always pass.  Commands are any
    objects exposing ``gated`` and, when gated, ``deenergize()``.
    """
    if state.mcr_energized:
        return list(requested)
    permitted = []
    for command in requested:
        if getattr(command, "gated", False):
            replacement = command.deenergize()
            if replacement is not None:
                permitted.append(replacement)
        else:
            permitted.append(command)
    return permitted
