"""Batch test sequencing: the nested pick / dispense / measure / unload loop.

One ``step_cycle`` call per simulation tick drives a 5x5 (by default) tray
of parts in column-major order: the outer index walks columns, the inner
index walks rows inside the current column.  Each part is picked from its
tray slot, placed on the test station, wetted with one droplet, measured,
and carried to the unload drop-off.  A safety trip anywhere replaces the
whole command stream with silence and parks the cycle in FAULTED; an
operator stop drains through STOPPING (actuators parked) back to IDLE.

Per-part device faults (pick miss, dry dispense, actuator or measurement
faults) follow the configured policy: skip the part and keep the batch
moving, or halt the batch through the STOPPING path.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import ClassVar

from .errors import ConfigError
from .motion import StepperAxisConfig, ZPole, mm_to_steps
from .safety import SafetyState, SafetyMode


class Phase(Enum):
    IDLE = "idle"
    INITIALIZING = "initializing"
    HOMING = "homing"
    PICKING = "picking"
    PLACING = "placing"
    DISPENSING = "dispensing"
    MEASURING = "measuring"
    UNLOADING = "unloading"
    ADVANCING = "advancing"
    COMPLETE = "complete"
    STOPPING = "stopping"
    FAULTED = "faulted"


# Phases with actuators potentially energized; a stop request drains them.
ACTIVE_PHASES = frozenset(
    {
        Phase.INITIALIZING,
        Phase.HOMING,
        Phase.PICKING,
        Phase.PLACING,
        Phase.DISPENSING,
        Phase.MEASURING,
        Phase.UNLOADING,
        Phase.ADVANCING,
    }
)


class FaultPolicy(Enum):
    SKIP_PART = "skip_part"
    HALT = "halt"


@dataclass(frozen=True)
class TrayLayout:
    """Indexed sample grid; total part count is columns x rows."""

    columns: int = 5
    rows: int = 5
    origin_mm: tuple[float, float] = (50.0, 100.0)
    pitch_mm: tuple[float, float] = (60.0, 60.0)

    def __post_init__(self):
        if self.columns < 1 or self.rows < 1:
            raise ConfigError("layout needs at least one column and one row")
        if self.pitch_mm[0] <= 0 or self.pitch_mm[1] <= 0:
            raise ConfigError("layout pitch must be positive")

    @property
    def total_parts(self) -> int:
        return self.columns * self.rows


def part_position(layout: TrayLayout, column: int, row: int) -> tuple[float, float]:
    """Tray-slot coordinates in mm; raises IndexError outside the grid."""
    if not (0 <= column < layout.columns):
        raise IndexError(f"column {column} outside 0..{layout.columns - 1}")
    if not (0 <= row < layout.rows):
        raise IndexError(f"row {row} outside 0..{layout.rows - 1}")
    return (
        layout.origin_mm[0] + column * layout.pitch_mm[0],
        layout.origin_mm[1] + row * layout.pitch_mm[1],
    )


@dataclass(frozen=True)
class CellPoses:
    """Named XY poses (mm) plus the dispenser axis stations."""

    test_station_mm: tuple[float, float] = (150.0, 700.0)
    unload_mm: tuple[float, float] = (300.0, 1100.0)
    dispenser_drop_mm: float = 150.0
    dispenser_park_mm: float = 0.0


# ---------------------------------------------------------------------------
# Commands emitted toward the device layer.  ``gated`` marks commands that
# energize a drive or solenoid and therefore pass through the MCR gate.


@dataclass(frozen=True)
class MoveAxis:
    axis: str
    target_steps: int
    gated: ClassVar[bool] = True

    def deenergize(self):
        return StopAxis(self.axis)


@dataclass(frozen=True)
class StopAxis:
    axis: str
    gated: ClassVar[bool] = False


@dataclass(frozen=True)
class HomeAxis:
    axis: str
    gated: ClassVar[bool] = True

    def deenergize(self):
        return StopAxis(self.axis)


@dataclass(frozen=True)
class CommandZ:
    direction: ZPole
    gated: ClassVar[bool] = True

    def deenergize(self):
        return None


@dataclass(frozen=True)
class GripPart:
    source: str  # "tray" or "station"
    part_id: int
    column: int = -1
    row: int = -1
    gated: ClassVar[bool] = True

    def deenergize(self):
        return ReleaseGrip("none")


@dataclass(frozen=True)
class ReleaseGrip:
    place: str  # "station", "unload", or "none"
    gated: ClassVar[bool] = False


@dataclass(frozen=True)
class DispenseDroplet:
    part_id: int
    gated: ClassVar[bool] = True

    def deenergize(self):
        return None


@dataclass(frozen=True)
class StartMeasurement:
    part_id: int
    column: int
    row: int
    gated: ClassVar[bool] = False


@dataclass(frozen=True)
class RunPump:
    duration_s: float
    gated: ClassVar[bool] = True

    def deenergize(self):
        return StopPump()


@dataclass(frozen=True)
class StopPump:
    gated: ClassVar[bool] = False


# ---------------------------------------------------------------------------
# Device state as the sequencer sees it; the kernel refreshes one instance
# of this view per tick.


@dataclass
class AxisView:
    position_steps: int | None = None
    moving: bool = False
    homed: bool = False
    homing: bool = False
    homing_failed: bool = False


@dataclass
class DevicesView:
    axes: dict[str, AxisView] = field(default_factory=dict)
    z_pole: ZPole = ZPole.UP
    z_moving: bool = False
    z_fault: bool = False
    gripper_gripped: bool = False
    grip_result: str | None = None      # "picked" | "miss", sticky per attempt
    dispense_result: str | None = None  # "ok" | "dry" | "fault"
    dispense_busy: bool = False
    measure_result: str | None = None   # "ok" | "fault"
    measure_busy: bool = False


@dataclass(frozen=True)
class SequencerConfig:
    layout: TrayLayout
    poses: CellPoses
    axis_cfgs: dict[str, StepperAxisConfig]
    fault_policy: FaultPolicy = FaultPolicy.SKIP_PART


@dataclass
class CycleState:
    """Where the batch stands; copied on change, shared when idle-waiting."""

    phase: Phase = Phase.IDLE
    column: int = 0
    row: int = 0
    parts_done: int = 0
    substep: int = 0
    issued: bool = False
    part_skipped: bool = False
    skip_reason: str | None = None
    stopped: bool = False
    started_at_us: int = 0

    @property
    def part_id(self) -> int:
        return self.parts_done + 1


def initialize(cycle: CycleState, now_us: int = 0) -> CycleState:
    """Reset batch progress to initial conditions (indices and counters zeroed)."""
    return CycleState(phase=cycle.phase, started_at_us=now_us)


def _next(cycle: CycleState, **changes) -> CycleState:
    new = copy.copy(cycle)
    for key, value in changes.items():
        setattr(new, key, value)
    return new


def _enter(cycle: CycleState, phase: Phase, **changes) -> CycleState:
    return _next(cycle, phase=phase, substep=0, issued=False, **changes)


def _steps(cfg: SequencerConfig, axis: str, mm: float) -> int:
    return mm_to_steps(cfg.axis_cfgs[axis], mm)[0]


def _xy_targets(cfg: SequencerConfig, pose_mm: tuple[float, float]) -> dict[str, int]:
    return {"x": _steps(cfg, "x", pose_mm[0]), "y": _steps(cfg, "y", pose_mm[1])}


def _xy_done(devices: DevicesView, targets: dict[str, int]) -> bool:
    for axis, target in targets.items():
        view = devices.axes[axis]
        if view.moving or view.position_steps != target:
            return False
    return True


def _axis_done(devices: DevicesView, axis: str, target: int) -> bool:
    view = devices.axes[axis]
    return not view.moving and view.position_steps == target


def step_cycle(
    cycle: CycleState,
    safety: SafetyState,
    operator: str,
    devices: DevicesView,
    cfg: SequencerConfig,
    now_us: int = 0,
) -> tuple[CycleState, list]:
    """Advance the batch one tick; returns the new state and device commands.

    ``operator`` is this tick's drained operator intent: "start", "stop", or
    "none".  Safety dominance comes first: with the monitor out of RUN the
    returned command list is always empty and the phase latches FAULTED.
    """
    # Safety dominates everything, including STOPPING.
    if safety.mode is not SafetyMode.RUN:
        if cycle.phase is Phase.FAULTED:
            return cycle, []
        return _enter(cycle, Phase.FAULTED), []

    if operator == "stop" and cycle.phase in ACTIVE_PHASES:
        return _enter(cycle, Phase.STOPPING), []

    phase = cycle.phase

    if phase is Phase.IDLE or phase is Phase.COMPLETE or phase is Phase.FAULTED:
        if operator == "start":
            return _enter(cycle, Phase.INITIALIZING, stopped=False), []
        return cycle, []

    if phase is Phase.INITIALIZING:
        fresh = initialize(cycle, now_us)
        return _enter(fresh, Phase.HOMING, started_at_us=now_us), [ReleaseGrip("none")]

    if phase is Phase.HOMING:
        return _step_homing(cycle, devices)

    if phase is Phase.PICKING:
        return _step_picking(cycle, devices, cfg)

    if phase is Phase.PLACING:
        return _step_placing(cycle, devices, cfg)

    if phase is Phase.DISPENSING:
        return _step_dispensing(cycle, devices, cfg)

    if phase is Phase.MEASURING:
        return _step_measuring(cycle, devices, cfg)

    if phase is Phase.UNLOADING:
        return _step_unloading(cycle, devices, cfg)

    if phase is Phase.ADVANCING:
        return _step_advancing(cycle, cfg)

    if phase is Phase.STOPPING:
        return _step_stopping(cycle, devices, cfg)

    raise ConfigError(f"unhandled phase {phase}")  # pragma: no cover


def _skip_or_halt(cycle: CycleState, reason: str, cfg: SequencerConfig, commands: list):
    """Apply the per-part fault policy; extra recovery commands ride along."""
    if cfg.fault_policy is FaultPolicy.HALT:
        return _enter(cycle, Phase.STOPPING), commands
    return (
        _enter(cycle, Phase.ADVANCING, part_skipped=True, skip_reason=reason),
        commands,
    )


def _step_homing(cycle: CycleState, devices: DevicesView):
    # Substeps: 0 raise Z, then home x / y / dispenser in order.
    order = ("x", "y", "dispenser")
    if cycle.substep == 0:
        if not cycle.issued:
            return _next(cycle, issued=True), [CommandZ(ZPole.UP)]
        if devices.z_fault:
            return _enter(cycle, Phase.FAULTED), []
        if devices.z_pole is ZPole.UP:
            return _next(cycle, substep=1, issued=False), []
        return cycle, []
    axis = order[cycle.substep - 1]
    view = devices.axes[axis]
    if not cycle.issued:
        return _next(cycle, issued=True), [HomeAxis(axis)]
    if view.homing_failed:
        return _enter(cycle, Phase.FAULTED), []
    if view.homed and not view.homing:
        if cycle.substep == len(order):
            return _enter(cycle, Phase.PICKING), []
        return _next(cycle, substep=cycle.substep + 1, issued=False), []
    return cycle, []


def _step_picking(cycle: CycleState, devices: DevicesView, cfg: SequencerConfig):
    slot = part_position(cfg.layout, cycle.column, cycle.row)
    if cycle.substep == 0:
        targets = _xy_targets(cfg, slot)
        if not cycle.issued:
            return _next(cycle, issued=True), [
                MoveAxis("x", targets["x"]),
                MoveAxis("y", targets["y"]),
            ]
        if _xy_done(devices, targets):
            return _next(cycle, substep=1, issued=False), []
        return cycle, []
    if cycle.substep == 1:
        if not cycle.issued:
            return _next(cycle, issued=True), [CommandZ(ZPole.DOWN)]
        if devices.z_fault:
            return _skip_or_halt(cycle, "actuator_fault", cfg, [CommandZ(ZPole.UP)])
        if devices.z_pole is ZPole.DOWN:
            return _next(cycle, substep=2, issued=False), []
        return cycle, []
    if cycle.substep == 2:
        if not cycle.issued:
            return _next(cycle, issued=True), [
                GripPart("tray", cycle.part_id, cycle.column, cycle.row)
            ]
        if devices.grip_result == "picked":
            return _next(cycle, substep=3, issued=False), []
        if devices.grip_result == "miss":
            if cfg.fault_policy is FaultPolicy.HALT:
                return _enter(cycle, Phase.STOPPING), [ReleaseGrip("none")]
            # Nothing to carry; raise Z and advance past the empty slot.
            return (
                _next(cycle, substep=3, issued=False, part_skipped=True, skip_reason="pick_miss"),
                [ReleaseGrip("none")],
            )
        return cycle, []
    # Substep 3: retract Z, then branch on whether we actually hold a part.
    if not cycle.issued:
        return _next(cycle, issued=True), [CommandZ(ZPole.UP)]
    if devices.z_fault or devices.z_pole is ZPole.UP:
        if cycle.part_skipped:
            return _enter(cycle, Phase.ADVANCING), []
        return _enter(cycle, Phase.PLACING), []
    return cycle, []


def _step_placing(cycle: CycleState, devices: DevicesView, cfg: SequencerConfig):
    if cycle.substep == 0:
        targets = _xy_targets(cfg, cfg.poses.test_station_mm)
        if not cycle.issued:
            return _next(cycle, issued=True), [
                MoveAxis("x", targets["x"]),
                MoveAxis("y", targets["y"]),
            ]
        if _xy_done(devices, targets):
            return _next(cycle, substep=1, issued=False), []
        return cycle, []
    if cycle.substep == 1:
        if not cycle.issued:
            return _next(cycle, issued=True), [CommandZ(ZPole.DOWN)]
        if devices.z_fault:
            return _skip_or_halt(
                cycle, "actuator_fault", cfg, [ReleaseGrip("none"), CommandZ(ZPole.UP)]
            )
        if devices.z_pole is ZPole.DOWN:
            return _next(cycle, substep=2, issued=False), []
        return cycle, []
    if cycle.substep == 2:
        if not cycle.issued:
            return _next(cycle, issued=True), [ReleaseGrip("station")]
        if not devices.gripper_gripped:
            return _next(cycle, substep=3, issued=False), []
        return cycle, []
    if not cycle.issued:
        return _next(cycle, issued=True), [CommandZ(ZPole.UP)]
    if devices.z_fault or devices.z_pole is ZPole.UP:
        return _enter(cycle, Phase.DISPENSING), []
    return cycle, []


def _step_dispensing(cycle: CycleState, devices: DevicesView, cfg: SequencerConfig):
    drop = _steps(cfg, "dispenser", cfg.poses.dispenser_drop_mm)
    park = _steps(cfg, "dispenser", cfg.poses.dispenser_park_mm)
    if cycle.substep == 0:
        if not cycle.issued:
            return _next(cycle, issued=True), [MoveAxis("dispenser", drop)]
        if _axis_done(devices, "dispenser", drop):
            return _next(cycle, substep=1, issued=False), []
        return cycle, []
    if cycle.substep == 1:
        if not cycle.issued:
            return _next(cycle, issued=True), [DispenseDroplet(cycle.part_id)]
        result = devices.dispense_result
        if result == "ok":
            return _next(cycle, substep=2, issued=False), []
        if result in ("dry", "fault"):
            if cfg.fault_policy is FaultPolicy.HALT:
                return _enter(cycle, Phase.STOPPING), []
            # Dry part still occupies the station; unload it unmeasured.
            return (
                _next(cycle, substep=2, issued=False, part_skipped=True, skip_reason=result),
                [],
            )
        return cycle, []
    if not cycle.issued:
        return _next(cycle, issued=True), [MoveAxis("dispenser", park)]
    if _axis_done(devices, "dispenser", park):
        if cycle.part_skipped:
            return _enter(cycle, Phase.UNLOADING), []
        return _enter(cycle, Phase.MEASURING), []
    return cycle, []


def _step_measuring(cycle: CycleState, devices: DevicesView, cfg: SequencerConfig):
    if not cycle.issued:
        return _next(cycle, issued=True), [
            StartMeasurement(cycle.part_id, cycle.column, cycle.row)
        ]
    result = devices.measure_result
    if result == "ok":
        return _enter(cycle, Phase.UNLOADING), []
    if result == "fault":
        if cfg.fault_policy is FaultPolicy.HALT:
            return _enter(cycle, Phase.STOPPING), []
        return _enter(cycle, Phase.UNLOADING, part_skipped=True, skip_reason="measurement_fault"), []
    return cycle, []


def _step_unloading(cycle: CycleState, devices: DevicesView, cfg: SequencerConfig):
    if cycle.substep == 0:
        if not cycle.issued:
            return _next(cycle, issued=True), [CommandZ(ZPole.DOWN)]
        if devices.z_fault:
            return _skip_or_halt(cycle, "actuator_fault", cfg, [CommandZ(ZPole.UP)])
        if devices.z_pole is ZPole.DOWN:
            return _next(cycle, substep=1, issued=False), []
        return cycle, []
    if cycle.substep == 1:
        if not cycle.issued:
            return _next(cycle, issued=True), [GripPart("station", cycle.part_id)]
        if devices.grip_result == "picked":
            return _next(cycle, substep=2, issued=False), []
        if devices.grip_result == "miss":
            return _skip_or_halt(
                cycle, "station_miss", cfg, [ReleaseGrip("none"), CommandZ(ZPole.UP)]
            )
        return cycle, []
    if cycle.substep == 2:
        if not cycle.issued:
            return _next(cycle, issued=True), [CommandZ(ZPole.UP)]
        if devices.z_fault or devices.z_pole is ZPole.UP:
            return _next(cycle, substep=3, issued=False), []
        return cycle, []
    if cycle.substep == 3:
        targets = _xy_targets(cfg, cfg.poses.unload_mm)
        if not cycle.issued:
            return _next(cycle, issued=True), [
                MoveAxis("x", targets["x"]),
                MoveAxis("y", targets["y"]),
            ]
        if _xy_done(devices, targets):
            return _next(cycle, substep=4, issued=False), []
        return cycle, []
    if cycle.substep == 4:
        if not cycle.issued:
            return _next(cycle, issued=True), [CommandZ(ZPole.DOWN)]
        if devices.z_fault:
            return _skip_or_halt(
                cycle, "actuator_fault", cfg, [ReleaseGrip("none"), CommandZ(ZPole.UP)]
            )
        if devices.z_pole is ZPole.DOWN:
            return _next(cycle, substep=5, issued=False), []
        return cycle, []
    if cycle.substep == 5:
        if not cycle.issued:
            return _next(cycle, issued=True), [ReleaseGrip("unload")]
        if not devices.gripper_gripped:
            return _next(cycle, substep=6, issued=False), []
        return cycle, []
    if not cycle.issued:
        return _next(cycle, issued=True), [CommandZ(ZPole.UP)]
    if devices.z_fault or devices.z_pole is ZPole.UP:
        return _enter(cycle, Phase.ADVANCING), []
    return cycle, []


def _step_advancing(cycle: CycleState, cfg: SequencerConfig):
    parts_done = cycle.parts_done + 1
    if parts_done >= cfg.layout.total_parts:
        return _enter(cycle, Phase.COMPLETE, parts_done=parts_done,
                      part_skipped=False, skip_reason=None), []
    row = cycle.row + 1
    column = cycle.column
    if row >= cfg.layout.rows:
        row = 0
        column += 1
    return (
        _enter(
            cycle,
            Phase.PICKING,
            parts_done=parts_done,
            row=row,
            column=column,
            part_skipped=False,
            skip_reason=None,
        ),
        [],
    )


def _step_stopping(cycle: CycleState, devices: DevicesView, cfg: SequencerConfig):
    if cycle.substep == 0:
        if not cycle.issued:
            commands = [StopAxis("x"), StopAxis("y"), StopAxis("dispenser"),
                        ReleaseGrip("none"), CommandZ(ZPole.UP)]
            return _next(cycle, issued=True), commands
        if devices.z_fault or devices.z_pole is ZPole.UP:
            return _next(cycle, substep=1, issued=False), []
        return cycle, []
    if cycle.substep == 1:
        homed = [axis for axis in ("x", "y", "dispenser") if devices.axes[axis].homed]
        if not cycle.issued:
            return _next(cycle, issued=True), [MoveAxis(axis, 0) for axis in homed]
        if all(_axis_done(devices, axis, 0) for axis in homed):
            return _enter(cycle, Phase.IDLE, stopped=True), []
        return cycle, []
    return cycle, []  # pragma: no cover
