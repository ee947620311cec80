"""Deterministic tick kernel driving the composed cell.

All timing derives from one integer microsecond clock.  The pipeline for a
tick at simulated time T:

1. device completions due at or before T fire, stamped with their exact
   completion times (a move ending at T happened before anything else the
   tick does);
2. scenario injections due at T mutate the raw inputs;
3. externally queued operator commands drain, E-stops first;
4. the safety monitor steps; a fresh fault aborts every in-flight
   actuation at T, so no pulse or stroke continues past the fault tick;
5. the sequencer steps and its command stream passes the MCR gate;
6. permitted commands start new device activity.

Between ticks the world can only change at a known set of future instants:
device completions, scripted injection times, safety discrepancy
deadlines, the time limit.  When a tick produced no observable change the
loop therefore jumps the clock to the next such instant (rounded up to the
tick grid).  The jump is exact, not approximate: the accelerated loop and
the plain tick-by-tick loop produce byte-identical event logs, which the
test suite asserts on fault-laden scenarios.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .. import fluidics, goniometry
from ..errors import StateError
from ..motion import MoveProfile, StepperAxisConfig, ZPole, mm_to_steps
from ..safety import (
    SafetyChannelPair,
    SafetyMode,
    SafetySource,
    SafetyState,
    initial_safety_state,
    mcr_gate,
    step_safety,
)
from ..sequencer import (
    AxisView,
    CommandZ,
    CycleState,
    DevicesView,
    DispenseDroplet,
    GripPart,
    HomeAxis,
    MoveAxis,
    Phase,
    ReleaseGrip,
    RunPump,
    SequencerConfig,
    StartMeasurement,
    StopAxis,
    StopPump,
    step_cycle,
)
from .events import EventLog
from .rng import random_stream
from .scenario import Scenario

_ACTIVE = "active"


class _AxisRuntime:
    """One stepper drive: logical position plus hidden switch distance."""

    __slots__ = (
        "cfg", "position", "homed", "true_offset", "move", "move_started",
        "homing", "homing_failed",
    )

    def __init__(self, cfg: StepperAxisConfig, start_offset_steps: int):
        self.cfg = cfg
        self.position: int | None = None
        self.homed = False
        self.true_offset = start_offset_steps  # steps from the switch trip point
        self.move: MoveProfile | None = None
        self.move_started = 0
        self.homing: dict | None = None
        self.homing_failed = False

    def start_move(self, target: int, now_us: int, log: EventLog):
        if self.move is not None or self.homing is not None:
            raise StateError(f"axis {self.cfg.name}: motion already active")
        if not self.homed or self.position is None:
            raise StateError(f"axis {self.cfg.name}: move before homing")
        profile = MoveProfile(
            axis=self.cfg.name,
            start_steps=self.position,
            delta_steps=target - self.position,
            pulse_period_us=self.cfg.pulse_period_us,
        )
        log.emit(now_us, "motion", "move_start", {
            "axis": self.cfg.name,
            "from_steps": profile.start_steps,
            "to_steps": target,
            "duration_us": profile.duration_us,
        })
        if profile.delta_steps == 0:
            log.emit(now_us, "motion", "move_end", {
                "axis": self.cfg.name, "position_steps": self.position,
                "started_us": now_us, "ended_us": now_us,
            })
            return
        self.move = profile
        self.move_started = now_us

    def start_homing(self, now_us: int, log: EventLog):
        if self.move is not None or self.homing is not None:
            raise StateError(f"axis {self.cfg.name}: motion already active")
        self.homing_failed = False
        self.homed = False
        self.position = None
        period = self.cfg.pulse_period_us
        budget = self.cfg.max_steps - self.cfg.min_steps + self.cfg.backoff_steps
        seek = self.true_offset
        log.emit(now_us, "motion", "home_start", {"axis": self.cfg.name})
        if seek > budget:
            self.homing = {
                "stage": "timeout", "start_us": now_us,
                "end_us": now_us + budget * period, "steps": budget,
            }
        else:
            self.homing = {
                "stage": "seek", "start_us": now_us,
                "end_us": now_us + seek * period, "steps": seek,
            }

    def pending_times(self) -> list[int]:
        times = []
        if self.move is not None:
            times.append(self.move_started + self.move.duration_us)
        if self.homing is not None:
            times.append(self.homing["end_us"])
        return times

    def advance_once(self, to_us: int, log: EventLog) -> int | None:
        """Fire the earliest completion at or before ``to_us``; returns its time."""
        if self.move is not None:
            end = self.move_started + self.move.duration_us
            if end <= to_us:
                self.position = self.move.target_steps
                self.true_offset += self.move.delta_steps
                log.emit(end, "motion", "move_end", {
                    "axis": self.cfg.name, "position_steps": self.position,
                    "started_us": self.move_started, "ended_us": end,
                })
                self.move = None
                return end
        if self.homing is not None and self.homing["end_us"] <= to_us:
            h = self.homing
            period = self.cfg.pulse_period_us
            if h["stage"] == "timeout":
                self.true_offset -= h["steps"]
                self.homing = None
                self.homing_failed = True
                log.emit(h["end_us"], "motion", "home_timeout", {
                    "axis": self.cfg.name, "travel_steps": h["steps"],
                })
                return h["end_us"]
            if h["stage"] == "seek":
                self.true_offset = 0
                backoff = self.cfg.backoff_steps
                self.homing = {
                    "stage": "backoff", "start_us": h["end_us"],
                    "end_us": h["end_us"] + backoff * period, "steps": backoff,
                    "seek_steps": h["steps"],
                }
                return h["end_us"]
            # backoff complete: this spot is logical zero
            self.true_offset = h["steps"]
            self.position = 0
            self.homed = True
            self.homing = None
            log.emit(h["end_us"], "motion", "home_end", {
                "axis": self.cfg.name, "steps_to_switch": h.get("seek_steps", 0),
                "backoff_steps": h["steps"],
            })
            return h["end_us"]
        return None

    def abort(self, at_us: int, log: EventLog):
        if self.move is not None:
            pulses = self.move.steps_after(at_us - self.move_started)
            self.position = self.move.start_steps + pulses
            self.true_offset += pulses
            log.emit(at_us, "motion", "move_abort", {
                "axis": self.cfg.name, "position_steps": self.position,
                "pulses": abs(pulses),
            })
            self.move = None
        if self.homing is not None:
            h = self.homing
            period = self.cfg.pulse_period_us
            done = min((at_us - h["start_us"]) // period, h["steps"])
            if h["stage"] == "backoff":
                self.true_offset += done
            else:
                self.true_offset -= done
            self.homing = None
            self.homed = False
            self.position = None
            log.emit(at_us, "motion", "home_abort", {"axis": self.cfg.name})

    def stop(self, at_us: int, log: EventLog):
        if self.move is not None or self.homing is not None:
            self.abort(at_us, log)

    @property
    def moving(self) -> bool:
        return self.move is not None

    def position_mm(self) -> float | None:
        if self.position is None:
            return None
        return self.position * self.cfg.travel_per_rev_mm / self.cfg.steps_per_rev


class _ZRuntime:
    __slots__ = ("pole", "commanded", "stroke_us", "margin_us", "end_us", "deadline_us", "fault")

    def __init__(self, stroke_us: int, margin_us: int):
        self.pole = ZPole.UP
        self.commanded = ZPole.UP
        self.stroke_us = stroke_us
        self.margin_us = margin_us
        self.end_us: int | None = None
        self.deadline_us: int | None = None
        self.fault = False

    def command(self, direction: ZPole, now_us: int, log: EventLog):
        self.fault = False
        self.commanded = direction
        if self.pole is direction:
            self.end_us = None
            self.deadline_us = None
            return
        self.pole = ZPole.IN_TRANSIT
        self.end_us = now_us + self.stroke_us
        self.deadline_us = self.end_us + self.margin_us
        log.emit(now_us, "motion", "z_command", {"direction": direction.value})

    def pending_times(self) -> list[int]:
        times = []
        if self.end_us is not None:
            times.append(self.end_us)
        if self.deadline_us is not None:
            times.append(self.deadline_us)
        return times

    def advance_once(self, to_us: int, suppressed: set[str], log: EventLog) -> int | None:
        if self.end_us is not None and self.end_us <= to_us:
            end = self.end_us
            self.end_us = None
            sensor = "z_up" if self.commanded is ZPole.UP else "z_down"
            if sensor in suppressed:
                return end  # stroke landed but the sensor stays silent
            self.pole = self.commanded
            self.deadline_us = None
            log.emit(end, "motion", "z_confirmed", {"pole": self.pole.value})
            return end
        if self.deadline_us is not None and self.deadline_us <= to_us:
            at = self.deadline_us
            self.deadline_us = None
            self.fault = True
            log.emit(at, "motion", "actuator_fault", {
                "device": "z", "commanded": self.commanded.value,
            })
            return at
        return None

    def abort(self, at_us: int, log: EventLog):
        if self.end_us is not None or self.deadline_us is not None:
            self.end_us = None
            self.deadline_us = None
            log.emit(at_us, "motion", "z_abort", {"commanded": self.commanded.value})

    @property
    def moving(self) -> bool:
        return self.end_us is not None


class _DispenseRuntime:
    __slots__ = ("status", "end_us", "part_id")

    def __init__(self):
        self.status = "idle"  # idle | bursting | ok | dry | fault
        self.end_us: int | None = None
        self.part_id = 0


class _MeasureRuntime:
    __slots__ = ("status", "end_us", "part_id", "column", "row")

    def __init__(self):
        self.status = "idle"  # idle | busy | ok | fault
        self.end_us: int | None = None
        self.part_id = 0
        self.column = 0
        self.row = 0


class _PumpRuntime:
    __slots__ = ("running", "start_us", "end_us")

    def __init__(self):
        self.running = False
        self.start_us = 0
        self.end_us: int | None = None


@dataclass
class RunResult:
    phase: str
    exit_code: int
    stop_reason: str
    measurements: list
    log: EventLog
    snapshot: dict
    sim_time_us: int
    ticks_processed: int
    reservoir_level_ml: float = 0.0


class WorkCell:
    """The composed twin: devices, safety monitor, sequencer, event log."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.tick_us = scenario.tick_us
        self.now_us = 0
        self.log = EventLog()
        self.ticks_processed = 0

        self.axes = {
            name: _AxisRuntime(cfg, scenario.axis_start_offset_steps.get(name, 0))
            for name, cfg in scenario.axes.items()
        }
        self.z = _ZRuntime(scenario.z_stroke_time_us, scenario.z_confirm_margin_us)
        self.gripper = fluidics.VacuumGripper()
        self.holding_part: int | None = None
        self.grip_result: str | None = None
        self.dispenser = _DispenseRuntime()
        self.measurer = _MeasureRuntime()
        self.pump = _PumpRuntime()
        # Private copy: the scenario object stays reusable across cells.
        self.reservoir = fluidics.Reservoir(
            capacity_ml=scenario.reservoir.capacity_ml,
            level_ml=scenario.reservoir.level_ml,
        )

        layout = scenario.layout
        self.tray = {
            (c, r): True for c in range(layout.columns) for r in range(layout.rows)
        }
        self.station_part: int | None = None
        self.station_droplet_ul: float | None = None
        self.unloaded_parts: list[int] = []
        self.suppressed_sensors: set[str] = set()

        # Raw safety inputs; True means the contact chain is interrupted.
        self.estop_pressed = {SafetySource.ESTOP_OPERATOR: False, SafetySource.ESTOP_MAIN: False}
        self.door_open = False
        self.stuck_channels: dict[tuple[SafetySource, str], bool] = {}
        self._inputs_dirty = True

        self.safety = initial_safety_state()
        self.cycle = CycleState()
        self.seq_cfg = SequencerConfig(
            layout=scenario.layout,
            poses=scenario.poses,
            axis_cfgs=scenario.axes,
            fault_policy=scenario.fault_policy,
        )

        self.measurements: list[goniometry.MeasurementRecord] = []
        self._droplet_rng = random_stream(scenario.seed, "droplet")
        self._profile_rng = random_stream(scenario.seed, "profile")

        self._injections = list(scenario.injections)
        self._injection_index = 0
        self._commands: deque = deque()  # external (gateway) commands
        self._intents: set[str] = set()  # operator intents drained this tick
        self._reset_requested = False

        self.devices_view = DevicesView(axes={name: AxisView() for name in self.axes})
        self.log.emit(0, "kernel", "run_start", {
            "seed": scenario.seed, "tick_us": scenario.tick_us,
            "columns": layout.columns, "rows": layout.rows,
        })

    # ------------------------------------------------------------------
    # external surface

    def enqueue_command(self, kind: str, params: dict | None = None, client_id: str = "") -> None:
        self._commands.append((kind, dict(params or {}), client_id))

    def snapshot(self) -> dict:
        phase = self.cycle.phase
        green = phase in (
            Phase.INITIALIZING, Phase.HOMING, Phase.PICKING, Phase.PLACING,
            Phase.DISPENSING, Phase.MEASURING, Phase.UNLOADING, Phase.ADVANCING,
            Phase.STOPPING,
        ) and self.safety.mode is SafetyMode.RUN
        amber = phase in (Phase.IDLE, Phase.COMPLETE) and self.safety.mode is SafetyMode.RUN
        last = self.measurements[-1] if self.measurements else None
        axis_mm = {}
        for name, axis in self.axes.items():
            mm = axis.position_mm()
            axis_mm[f"{name}_mm"] = None if mm is None else round(mm, 4)
        return {
            "type": "snapshot",
            "v": 1,
            "t_us": self.now_us,
            "safety": {
                "mode": self.safety.mode.value,
                "fault_cause": self.safety.fault_cause.value if self.safety.fault_cause else None,
                "mcr_energized": self.safety.mcr_energized,
                "red_light": self.safety.red_light,
            },
            "cycle": {
                "phase": phase.value,
                "column": self.cycle.column,
                "row": self.cycle.row,
                "parts_done": self.cycle.parts_done,
                "total_parts": self.scenario.layout.total_parts,
            },
            "axes": axis_mm,
            "z": self.z.pole.value,
            "gripper": {"venturi_on": self.gripper.venturi_on, "gripped": self.gripper.gripped},
            "reservoir_ml": round(self.reservoir.level_ml, 6),
            "light_tower": {"green": green, "amber": amber, "red": self.safety.red_light},
            "last_measurement": None if last is None else {
                "part_id": last.part_id,
                "theta_deg": round(last.theta_deg, 3),
                "rms_mm": round(last.rms_residual_mm, 6),
                "t_us": last.t_us,
            },
            "measurement_count": len(self.measurements),
        }

    @property
    def terminal(self) -> bool:
        phase = self.cycle.phase
        if phase is Phase.COMPLETE or phase is Phase.FAULTED:
            return self._injection_index >= len(self._injections) and not self._commands
        if phase is Phase.IDLE and self.cycle.stopped:
            return self._injection_index >= len(self._injections) and not self._commands
        return False

    # ------------------------------------------------------------------
    # tick pipeline

    def step_tick(self) -> bool:
        """Process the current tick; returns True if anything observable happened."""
        now = self.now_us
        before = len(self.log)
        old_cycle = self.cycle
        old_safety = self.safety
        self.ticks_processed += 1

        self._advance_devices(now)
        self._apply_due_injections(now)
        self._drain_commands(now)

        self._step_safety_monitor(now)
        fresh_fault = (
            old_safety.mode is SafetyMode.RUN and self.safety.mode is not SafetyMode.RUN
        )
        if fresh_fault:
            self._abort_all(now)

        self._refresh_view()
        operator = "none"
        if "stop" in self._intents:
            operator = "stop"
        elif "start" in self._intents:
            operator = "start"
        self._intents.clear()

        new_cycle, commands = step_cycle(
            self.cycle, self.safety, operator, self.devices_view, self.seq_cfg, now
        )
        if new_cycle is not old_cycle:
            if new_cycle.phase is not old_cycle.phase:
                if new_cycle.phase is Phase.INITIALIZING:
                    # Initial conditions: position references are discarded
                    # and re-established by the homing pass that follows.
                    for axis in self.axes.values():
                        axis.homed = False
                        axis.position = None
                self.log.emit(now, "sequencer", "phase", {
                    "phase": new_cycle.phase.value,
                    "column": new_cycle.column,
                    "row": new_cycle.row,
                    "parts_done": new_cycle.parts_done,
                })
            if new_cycle.part_skipped and not old_cycle.part_skipped:
                self.log.emit(now, "sequencer", "part_skipped", {
                    "part_id": old_cycle.part_id,
                    "column": old_cycle.column,
                    "row": old_cycle.row,
                    "reason": new_cycle.skip_reason,
                })
        self.cycle = new_cycle

        permitted = mcr_gate(self.safety, commands)
        for command in permitted:
            self._execute(command, now)

        return (
            len(self.log) != before
            or new_cycle is not old_cycle
            or self.safety != old_safety
            or bool(commands)
        )

    def _advance_devices(self, to_us: int) -> None:
        # Fire completions in exact time order so log timestamps stay monotone.
        while True:
            fired = []
            for axis in self.axes.values():
                times = axis.pending_times()
                if times and min(times) <= to_us:
                    fired.append((min(times), 0, axis))
            z_times = self.z.pending_times()
            if z_times and min(z_times) <= to_us:
                fired.append((min(z_times), 1, self.z))
            if self.dispenser.end_us is not None and self.dispenser.end_us <= to_us:
                fired.append((self.dispenser.end_us, 2, self.dispenser))
            if self.measurer.end_us is not None and self.measurer.end_us <= to_us:
                fired.append((self.measurer.end_us, 3, self.measurer))
            if self.pump.end_us is not None and self.pump.end_us <= to_us:
                fired.append((self.pump.end_us, 4, self.pump))
            if not fired:
                return
            fired.sort(key=lambda item: (item[0], item[1]))
            _, tag, device = fired[0]
            if tag == 0:
                device.advance_once(to_us, self.log)
            elif tag == 1:
                device.advance_once(to_us, self.suppressed_sensors, self.log)
            elif tag == 2:
                self._finish_dispense()
            elif tag == 3:
                self._finish_measurement()
            else:
                self._finish_pump(self.pump.end_us)

    def _apply_due_injections(self, now_us: int) -> None:
        while (
            self._injection_index < len(self._injections)
            and self._injections[self._injection_index].t_us <= now_us
        ):
            injection = self._injections[self._injection_index]
            self._injection_index += 1
            self.apply_injection(injection.kind, injection.params, now_us)

    def apply_injection(self, kind: str, params: dict, now_us: int) -> None:
        self.log.emit(now_us, "kernel", "injection", {"kind": kind, "params": params})
        if kind == "estop_press":
            source = self._estop_source(params)
            self.estop_pressed[source] = True
            self._inputs_dirty = True
        elif kind == "estop_release":
            source = self._estop_source(params)
            self.estop_pressed[source] = False
            self._inputs_dirty = True
        elif kind == "door_open":
            self.door_open = True
            self._inputs_dirty = True
        elif kind == "door_close":
            self.door_open = False
            self._inputs_dirty = True
        elif kind == "channel_stuck":
            source = SafetySource(params.get("source", "door_interlock"))
            channel = params.get("channel", "a")
            current = self._channel_values(source)
            self.stuck_channels[(source, channel)] = current[0 if channel == "a" else 1]
            self._inputs_dirty = True
        elif kind == "part_missing":
            slot = (int(params["column"]), int(params["row"]))
            if slot in self.tray:
                self.tray[slot] = False
        elif kind == "pump_dry":
            self.reservoir.level_ml = 0.0
        elif kind == "sensor_suppress":
            self.suppressed_sensors.add(params.get("sensor", "part_present"))
        elif kind == "stop_press":
            self._intents.add("stop")
        elif kind == "start_press":
            self._intents.add("start")
        elif kind == "reset_press":
            self._reset_requested = True
        else:  # pragma: no cover - scenario validation rejects unknown kinds
            raise StateError(f"unknown injection kind {kind!r}")

    @staticmethod
    def _estop_source(params: dict) -> SafetySource:
        name = params.get("source", "operator")
        return SafetySource.ESTOP_MAIN if name == "main" else SafetySource.ESTOP_OPERATOR

    def _drain_commands(self, now_us: int) -> None:
        if not self._commands:
            return
        pending = []
        while self._commands:
            pending.append(self._commands.popleft())
        # E-stop wins over anything else queued in the same tick.
        pending.sort(key=lambda item: 0 if item[0] == "estop" else 1)
        for kind, params, client_id in pending:
            self.log.emit(now_us, "gateway", "command", {"kind": kind, "client_id": client_id})
            if kind == "estop":
                self.apply_injection("estop_press", params, now_us)
            elif kind == "estop_release":
                self.apply_injection("estop_release", params, now_us)
            elif kind in ("door_open", "door_close", "start_press", "stop_press", "reset_press"):
                self.apply_injection(kind, params, now_us)
            elif kind == "start":
                self.apply_injection("start_press", params, now_us)
            elif kind == "stop":
                self.apply_injection("stop_press", params, now_us)
            elif kind == "reset":
                self.apply_injection("reset_press", params, now_us)
            elif kind == "inject":
                self.apply_injection(params.get("kind", ""), params.get("params", {}), now_us)
            else:
                self.log.emit(now_us, "gateway", "command_rejected", {"kind": kind})

    def _channel_values(self, source: SafetySource) -> tuple[bool, bool]:
        """Current (a_closed, b_closed) for one monitored device."""
        if source is SafetySource.DOOR_INTERLOCK:
            closed = not self.door_open
        else:
            closed = not self.estop_pressed[source]
        a = self.stuck_channels.get((source, "a"), closed)
        b = self.stuck_channels.get((source, "b"), closed)
        return a, b

    def _build_channels(self) -> list[SafetyChannelPair]:
        pairs = []
        for source in (
            SafetySource.ESTOP_OPERATOR, SafetySource.ESTOP_MAIN, SafetySource.DOOR_INTERLOCK
        ):
            a, b = self._channel_values(source)
            pairs.append(SafetyChannelPair(source, a, b))
        return pairs

    def _step_safety_monitor(self, now_us: int) -> None:
        reset = self._reset_requested
        self._reset_requested = False
        need = (
            self._inputs_dirty
            or reset
            or self.safety.discrepancy_since
            or self.safety.mode is SafetyMode.AWAIT_RESET
        )
        if not need:
            return
        self._inputs_dirty = False
        old = self.safety
        self.safety = step_safety(
            old, self._build_channels(), reset, now_us, self.scenario.safety
        )
        if self.safety.mode is not old.mode:
            if self.safety.mode is SafetyMode.FAULTED:
                self.log.emit(now_us, "safety", "safety_fault", {
                    "cause": self.safety.fault_cause.value,
                    "source": self.safety.fault_source.value,
                    "mcr_energized": False,
                })
            elif self.safety.mode is SafetyMode.AWAIT_RESET:
                self.log.emit(now_us, "safety", "safety_reset_pending", {})
            else:
                self.log.emit(now_us, "safety", "safety_run", {"mcr_energized": True})

    def _abort_all(self, now_us: int) -> None:
        for axis in self.axes.values():
            axis.abort(now_us, self.log)
        self.z.abort(now_us, self.log)
        if self.pump.running:
            self._finish_pump(now_us)
        if self.dispenser.status == "bursting":
            self.dispenser.status = "fault"
            self.dispenser.end_us = None
            self.log.emit(now_us, "fluidics", "dispense_abort", {"part_id": self.dispenser.part_id})
        if self.measurer.status == "busy":
            self.measurer.status = "fault"
            self.measurer.end_us = None
            self.log.emit(now_us, "goniometry", "measurement_abort", {
                "part_id": self.measurer.part_id,
            })
        if self.gripper.venturi_on or self.gripper.gripped:
            if self.gripper.gripped and self.holding_part is not None:
                self.log.emit(now_us, "fluidics", "part_dropped", {"part_id": self.holding_part})
            self.gripper = fluidics.release(self.gripper)
            self.holding_part = None

    def _refresh_view(self) -> None:
        view = self.devices_view
        for name, axis in self.axes.items():
            axis_view = view.axes[name]
            axis_view.position_steps = axis.position
            axis_view.moving = axis.moving
            axis_view.homed = axis.homed
            axis_view.homing = axis.homing is not None
            axis_view.homing_failed = axis.homing_failed
        view.z_pole = self.z.pole
        view.z_moving = self.z.moving
        view.z_fault = self.z.fault
        view.gripper_gripped = self.gripper.gripped
        view.grip_result = self.grip_result
        view.dispense_busy = self.dispenser.status == "bursting"
        view.dispense_result = (
            self.dispenser.status if self.dispenser.status in ("ok", "dry", "fault") else None
        )
        view.measure_busy = self.measurer.status == "busy"
        view.measure_result = (
            self.measurer.status if self.measurer.status in ("ok", "fault") else None
        )

    # ------------------------------------------------------------------
    # command execution

    def _execute(self, command, now_us: int) -> None:
        if isinstance(command, MoveAxis):
            self.axes[command.axis].start_move(command.target_steps, now_us, self.log)
        elif isinstance(command, StopAxis):
            self.axes[command.axis].stop(now_us, self.log)
        elif isinstance(command, HomeAxis):
            self.axes[command.axis].start_homing(now_us, self.log)
        elif isinstance(command, CommandZ):
            self.z.command(command.direction, now_us, self.log)
        elif isinstance(command, GripPart):
            self._execute_grip(command, now_us)
        elif isinstance(command, ReleaseGrip):
            self._execute_release(command, now_us)
        elif isinstance(command, DispenseDroplet):
            self._execute_dispense(command, now_us)
        elif isinstance(command, StartMeasurement):
            self._execute_measure(command, now_us)
        elif isinstance(command, RunPump):
            self._execute_pump(command, now_us)
        elif isinstance(command, StopPump):
            if self.pump.running:
                self._finish_pump(now_us)
        else:  # pragma: no cover
            raise StateError(f"unknown command {command!r}")

    def _execute_grip(self, command: GripPart, now_us: int) -> None:
        if command.source == "tray":
            slot = (command.column, command.row)
            present = self.tray.get(slot, False)
        else:
            present = self.station_part is not None
        if "part_present" in self.suppressed_sensors:
            present = False
        result = fluidics.grip(self.gripper, present)
        self.gripper = result.gripper
        self.grip_result = "picked" if result.picked else "miss"
        self.log.emit(now_us, "fluidics", "grip_on", {
            "source": command.source, "part_id": command.part_id,
        })
        if result.picked:
            if command.source == "tray":
                self.tray[(command.column, command.row)] = False
                self.holding_part = command.part_id
            else:
                self.holding_part = self.station_part
                self.station_part = None
        else:
            self.log.emit(now_us, "fluidics", "pick_miss", {
                "source": command.source, "part_id": command.part_id,
                "column": command.column, "row": command.row,
            })

    def _execute_release(self, command: ReleaseGrip, now_us: int) -> None:
        was_holding = self.holding_part
        had_vacuum = self.gripper.venturi_on or self.gripper.gripped
        self.gripper = fluidics.release(self.gripper)
        self.grip_result = None
        if was_holding is not None:
            if command.place == "station":
                if self.station_part is not None:
                    self.log.emit(now_us, "fluidics", "part_dropped", {
                        "part_id": self.station_part,
                    })
                self.station_part = was_holding
                self.station_droplet_ul = None
            elif command.place == "unload":
                self.unloaded_parts.append(was_holding)
                self.log.emit(now_us, "fluidics", "part_unloaded", {"part_id": was_holding})
            else:
                self.log.emit(now_us, "fluidics", "part_dropped", {"part_id": was_holding})
            self.holding_part = None
        if had_vacuum:
            self.log.emit(now_us, "fluidics", "release", {
                "place": command.place, "part_id": was_holding,
            })

    def _execute_dispense(self, command: DispenseDroplet, now_us: int) -> None:
        drop_steps = self._dispenser_drop_steps()
        axis = self.axes["dispenser"]
        if axis.moving or axis.position != drop_steps:
            self.dispenser.status = "fault"
            self.log.emit(now_us, "fluidics", "position_error", {
                "part_id": command.part_id,
                "position_steps": axis.position,
                "expected_steps": drop_steps,
            })
            return
        self.dispenser.status = "bursting"
        self.dispenser.part_id = command.part_id
        self.dispenser.end_us = now_us + self.scenario.dispense.burst_duration_us
        self.log.emit(now_us, "fluidics", "dispense_start", {"part_id": command.part_id})

    def _dispenser_drop_steps(self) -> int:
        return mm_to_steps(self.scenario.axes["dispenser"], self.scenario.poses.dispenser_drop_mm)[0]

    def _finish_dispense(self) -> None:
        end = self.dispenser.end_us
        self.dispenser.end_us = None
        nominal_ml = self.scenario.dispense.droplet_volume_ul / 1000.0
        if self.reservoir.level_ml < nominal_ml:
            self.dispenser.status = "dry"
            self.log.emit(end, "fluidics", "dry_dispense", {
                "part_id": self.dispenser.part_id,
                "level_ml": round(self.reservoir.level_ml, 6),
            })
            return
        droplet = fluidics.dispense(self.scenario.dispense, self.reservoir, self._droplet_rng)
        self.station_droplet_ul = droplet.volume_ul
        self.dispenser.status = "ok"
        self.log.emit(end, "fluidics", "droplet", {
            "part_id": self.dispenser.part_id,
            "volume_ul": round(droplet.volume_ul, 4),
            "nominal_ul": droplet.nominal_ul,
            "level_ml": round(self.reservoir.level_ml, 6),
        })

    def _execute_measure(self, command: StartMeasurement, now_us: int) -> None:
        if self.station_part is None or self.station_droplet_ul is None:
            self.measurer.status = "fault"
            self.log.emit(now_us, "goniometry", "measurement_fault", {
                "part_id": command.part_id, "reason": "no wetted part on station",
            })
            return
        self.measurer.status = "busy"
        self.measurer.part_id = command.part_id
        self.measurer.column = command.column
        self.measurer.row = command.row
        self.measurer.end_us = now_us + self.scenario.measure_time_us

    def _finish_measurement(self) -> None:
        end = self.measurer.end_us
        self.measurer.end_us = None
        true_theta = self.scenario.theta_for_part(self.measurer.part_id - 1)
        try:
            record = goniometry.measure(
                true_theta,
                self.station_droplet_ul,
                self.scenario.measurement,
                self._profile_rng,
                part_id=self.measurer.part_id,
                t_us=end,
            )
        except goniometry.MeasurementFault as exc:
            self.measurer.status = "fault"
            self.log.emit(end, "goniometry", "measurement_fault", {
                "part_id": self.measurer.part_id, "reason": str(exc),
            })
            return
        self.measurements.append(record)
        self.measurer.status = "ok"
        self.log.emit(end, "goniometry", "measurement", {
            "part_id": record.part_id,
            "column": self.measurer.column,
            "row": self.measurer.row,
            "theta_deg": round(record.theta_deg, 3),
            "rms_mm": round(record.rms_residual_mm, 6),
        })

    def _execute_pump(self, command: RunPump, now_us: int) -> None:
        if self.pump.running:
            return
        self.pump.running = True
        self.pump.start_us = now_us
        self.pump.end_us = now_us + int(round(command.duration_s * 1_000_000))
        self.log.emit(now_us, "fluidics", "pump_start", {"duration_s": command.duration_s})

    def _finish_pump(self, at_us: int) -> None:
        ran_s = (at_us - self.pump.start_us) / 1_000_000.0
        result = fluidics.pump_run(self.scenario.pump, self.reservoir, ran_s)
        self.pump.running = False
        self.pump.end_us = None
        if result.overfilled:
            self.log.emit(at_us, "fluidics", "overfill_warning", {
                "level_ml": round(self.reservoir.level_ml, 6),
            })
        self.log.emit(at_us, "fluidics", "pump_stop", {
            "ran_s": ran_s, "delta_ml": round(result.delta_ml, 6),
            "level_ml": round(self.reservoir.level_ml, 6),
        })

    # ------------------------------------------------------------------
    # clock control

    def next_interesting_us(self) -> int:
        """Earliest future instant at which anything can change."""
        candidates = [self.scenario.time_limit_us]
        for axis in self.axes.values():
            candidates.extend(axis.pending_times())
        candidates.extend(self.z.pending_times())
        for end in (self.dispenser.end_us, self.measurer.end_us, self.pump.end_us):
            if end is not None:
                candidates.append(end)
        if self._injection_index < len(self._injections):
            candidates.append(self._injections[self._injection_index].t_us)
        if self.safety.discrepancy_since:
            window = self.scenario.safety.discrepancy_window_us
            candidates.append(min(t for _, t in self.safety.discrepancy_since) + window)
        future = [t for t in candidates if t > self.now_us]
        return min(future) if future else self.scenario.time_limit_us

    def advance_clock(self, accelerate: bool, busy: bool) -> None:
        if not accelerate or busy or self._commands:
            self.now_us += self.tick_us
            return
        target = self.next_interesting_us()
        aligned = ((target + self.tick_us - 1) // self.tick_us) * self.tick_us
        self.now_us = max(aligned, self.now_us + self.tick_us)

    def time_limit_reached(self) -> bool:
        return self.now_us >= self.scenario.time_limit_us

    def stop_reason(self) -> str:
        return {
            Phase.COMPLETE: "complete",
            Phase.FAULTED: "faulted",
        }.get(self.cycle.phase, "stopped")

    def emit_run_end(self, reason: str) -> None:
        self.log.emit(self.now_us, "kernel", "run_end", {
            "phase": self.cycle.phase.value,
            "reason": reason,
            "parts_done": self.cycle.parts_done,
            "measurements": len(self.measurements),
        })


def run_scenario(
    scenario: Scenario,
    log_path=None,
    accelerate: bool = True,
) -> RunResult:
    """Execute one scenario headless to its terminal state."""
    cell = WorkCell(scenario)
    stop_reason = "time_limit"
    while True:
        busy = cell.step_tick()
        if cell.terminal:
            stop_reason = cell.stop_reason()
            break
        if cell.time_limit_reached():
            cell.log.emit(cell.now_us, "kernel", "time_limit", {
                "limit_us": scenario.time_limit_us,
            })
            break
        cell.advance_clock(accelerate, busy)

    exit_code = {"complete": 0, "faulted": 2}.get(stop_reason, 3)
    cell.emit_run_end(stop_reason)
    if log_path is not None:
        cell.log.write(log_path)
    return RunResult(
        phase=cell.cycle.phase.value,
        exit_code=exit_code,
        stop_reason=stop_reason,
        measurements=list(cell.measurements),
        log=cell.log,
        snapshot=cell.snapshot(),
        sim_time_us=cell.now_us,
        ticks_processed=cell.ticks_processed,
        reservoir_level_ml=cell.reservoir.level_ml,
    )
