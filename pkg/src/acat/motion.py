"""Cartesian motion: stepper-driven X, Y, and dispenser axes plus the binary
pneumatic Z stroke.

Steppers run open-loop at a constant pulse rate; a move is fully described
by its signed step delta and the pulse period, so simulated durations are
exact on the microsecond clock.  Position bookkeeping always equals the
signed pulse count.  The Z axis has no step resolution at all: it is a
two-pole cylinder with reed sensors at both ends of the stroke.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, Iterator

from .errors import ConfigError, HomingTimeout, LimitError, NotHomed
from .signals import SignalState

DEFAULT_STEPS_PER_REV = 200
DEFAULT_PULSE_RATE_HZ = 400
DEFAULT_BACKOFF_STEPS = 50
DEFAULT_Z_STROKE_US = 300_000

AXIS_NAMES = ("x", "y", "dispenser")


@dataclass(frozen=True)
class StepperAxisConfig:
    """Static parameters of one stepper axis."""

    name: str
    travel_per_rev_mm: float
    steps_per_rev: int = DEFAULT_STEPS_PER_REV
    pulse_rate_hz: int = DEFAULT_PULSE_RATE_HZ
    min_steps: int = 0
    max_steps: int = 10_000
    backoff_steps: int = DEFAULT_BACKOFF_STEPS
    drive_fuse_a: float = 1.0

    def __post_init__(self):
        if self.name not in AXIS_NAMES:
            raise ConfigError(f"unknown axis {self.name!r}")
        if self.steps_per_rev <= 0 or self.pulse_rate_hz <= 0:
            raise ConfigError(f"axis {self.name}: steps_per_rev and pulse_rate must be positive")
        if self.travel_per_rev_mm <= 0:
            raise ConfigError(f"axis {self.name}: travel_per_rev must be positive")
        if self.max_steps <= self.min_steps:
            raise ConfigError(f"axis {self.name}: empty soft-limit range")
        if 1_000_000 % self.pulse_rate_hz != 0:
            # Keeps every pulse on an integer microsecond; 400 Hz -> 2500 us.
            raise ConfigError(
                f"axis {self.name}: pulse rate {self.pulse_rate_hz} Hz does not divide 1 MHz"
            )

    @property
    def pulse_period_us(self) -> int:
        return 1_000_000 // self.pulse_rate_hz


@dataclass
class StepperAxis:
    """Runtime state: logical position in steps, unknown until homed."""

    cfg: StepperAxisConfig
    position_steps: int | None = None
    homed: bool = False

    @property
    def position_mm(self) -> float | None:
        if self.position_steps is None:
            return None
        return steps_to_mm(self.cfg, self.position_steps)


@dataclass(frozen=True)
class MoveProfile:
    """A constant-rate pulse train: signed delta at the axis pulse period."""

    axis: str
    start_steps: int
    delta_steps: int
    pulse_period_us: int

    @property
    def direction(self) -> int:
        return -1 if self.delta_steps < 0 else 1

    @property
    def target_steps(self) -> int:
        return self.start_steps + self.delta_steps

    @property
    def duration_us(self) -> int:
        return abs(self.delta_steps) * self.pulse_period_us

    def steps_after(self, elapsed_us: int) -> int:
        """Signed progress after ``elapsed_us``; pulse k lands at k*period."""
        if elapsed_us <= 0:
            return 0
        emitted = min(elapsed_us // self.pulse_period_us, abs(self.delta_steps))
        return emitted * self.direction


def plan_move(axis: StepperAxis, target_steps: int) -> MoveProfile:
    """Plan a move to an absolute step position within the soft limits."""
    if not axis.homed or axis.position_steps is None:
        raise NotHomed(f"axis {axis.cfg.name} has no position reference")
    if not (axis.cfg.min_steps <= target_steps <= axis.cfg.max_steps):
        raise LimitError(
            f"axis {axis.cfg.name}: target {target_steps} outside "
            f"[{axis.cfg.min_steps}, {axis.cfg.max_steps}]"
        )
    return MoveProfile(
        axis=axis.cfg.name,
        start_steps=axis.position_steps,
        delta_steps=target_steps - axis.position_steps,
        pulse_period_us=axis.cfg.pulse_period_us,
    )


def steps_to_mm(cfg: StepperAxisConfig, steps: int) -> float:
    return steps * cfg.travel_per_rev_mm / cfg.steps_per_rev


def mm_to_steps(cfg: StepperAxisConfig, mm: float) -> tuple[int, float]:
    """Round to the nearest whole step; returns (steps, residual_mm)."""
    exact = mm * cfg.steps_per_rev / cfg.travel_per_rev_mm
    steps = round(exact)
    return steps, mm - steps_to_mm(cfg, steps)


@dataclass(frozen=True)
class HomingResult:
    axis: StepperAxis
    steps_to_switch: int
    backoff_steps: int


def home(
    axis: StepperAxis,
    limit_switch: Iterable[SignalState] | Callable[[int], bool],
    max_travel_steps: int | None = None,
) -> HomingResult:
    """Home an axis against its limit switch.

    The switch argument is either a stream of switch samples (one per
    emitted step, first sample taken before motion) or a predicate of the
    step count.  The axis seeks until the switch asserts, backs off the
    configured offset, and adopts that spot as position zero, leaving the
    physical switch ``backoff_steps`` away.
    """
    budget = max_travel_steps if max_travel_steps is not None else (
        axis.cfg.max_steps - axis.cfg.min_steps + axis.cfg.backoff_steps
    )
    if callable(limit_switch):
        asserted_at = lambda k: limit_switch(k)  # noqa: E731
        stream: Iterator[SignalState] | None = None
    else:
        stream = iter(limit_switch)
        asserted_at = None

    def sample(k: int) -> bool:
        if asserted_at is not None:
            return bool(asserted_at(k))
        assert stream is not None
        try:
            return next(stream).asserted
        except StopIteration:
            raise HomingTimeout(
                f"axis {axis.cfg.name}: switch stream ended before asserting"
            ) from None

    steps = 0
    while not sample(steps):
        steps += 1
        if steps > budget:
            raise HomingTimeout(
                f"axis {axis.cfg.name}: no switch within {budget} steps"
            )
    homed = replace(axis, position_steps=0, homed=True)
    return HomingResult(axis=homed, steps_to_switch=steps, backoff_steps=axis.cfg.backoff_steps)


class ZPole(Enum):
    UP = "up"
    DOWN = "down"
    IN_TRANSIT = "in_transit"


@dataclass
class PneumaticZ:
    """Binary pneumatic stroke with end-of-travel confirmation sensors."""

    commanded: ZPole = ZPole.UP
    confirmed: ZPole = ZPole.UP
    stroke_time_us: int = DEFAULT_Z_STROKE_US

    @property
    def sensor_up(self) -> bool:
        return self.confirmed is ZPole.UP

    @property
    def sensor_down(self) -> bool:
        return self.confirmed is ZPole.DOWN


def z_begin(z: PneumaticZ, direction: ZPole, now_us: int) -> tuple[PneumaticZ, int | None]:
    """Start a stroke; returns the new state and the confirmation deadline.

    Commanding the pole the cylinder already confirms is a no-op (deadline
    None, zero elapsed).
    """
    if direction not in (ZPole.UP, ZPole.DOWN):
        raise ConfigError(f"invalid z command {direction}")
    if z.confirmed is direction:
        return replace(z, commanded=direction), None
    moving = replace(z, commanded=direction, confirmed=ZPole.IN_TRANSIT)
    return moving, now_us + z.stroke_time_us


def z_complete(z: PneumaticZ) -> PneumaticZ:
    """Land the stroke on its commanded pole (sensors follow ``confirmed``)."""
    return replace(z, confirmed=z.commanded)


@dataclass(frozen=True)
class CellGeometry:
    """Work-envelope constants used for soft limits and layout validation."""

    y_travel_mm: float = 1360.0
    enclosure_mm: tuple[float, float, float] = (1475.0, 650.0, 1680.0)

    def __post_init__(self):
        if self.y_travel_mm <= 0 or any(d <= 0 for d in self.enclosure_mm):
            raise ConfigError("geometry dimensions must be positive")


def default_axis_configs() -> dict[str, StepperAxisConfig]:
    """Stock axis set: ball-screw X (5 mm lead), belt Y and dispenser (40 mm).

    Y soft travel covers the full 1360 mm span (6800 steps at 0.2 mm/step).
    """
    return {
        "x": StepperAxisConfig(name="x", travel_per_rev_mm=5.0, max_steps=16_000, drive_fuse_a=1.0),
        "y": StepperAxisConfig(name="y", travel_per_rev_mm=40.0, max_steps=6_800, drive_fuse_a=1.0),
        "dispenser": StepperAxisConfig(
            name="dispenser", travel_per_rev_mm=40.0, max_steps=1_500, drive_fuse_a=0.5
        ),
    }
