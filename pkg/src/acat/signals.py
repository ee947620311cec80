"""Logic-level I/O model shared by every device in the cell.

Covers power rails (boolean energized/de-energized), the I/O labeling
convention (``I:<block>/<gpio>`` and ``O:<block>/<gpio>``), input/output
polarity, edge detection, and switch debouncing.  Everything here is a pure
value transform; the pin registry is built once and frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from .errors import ConfigError, InputError, ParseError

# Voltage classes present in the cell: one AC feed plus the DC logic and
# actuator rails.  (voltage, kind) pairs outside this set are rejected.
ALLOWED_RAILS = frozenset({(120.0, "ac"), (24.0, "dc"), (12.0, "dc"), (5.0, "dc"), (3.3, "dc")})

DEFAULT_DEBOUNCE_US = 5_000  # 5 ms; typical switch bounce envelope


class Direction(Enum):
    INPUT = "input"
    OUTPUT = "output"


class ElectricalMode(Enum):
    SINKING_NPN = "sinking_npn"    # inputs: device pulls the line to common
    SOURCING_PNP = "sourcing_pnp"  # outputs: controller sources positive voltage


class Level(Enum):
    HIGH = "high"
    LOW = "low"


class Edge(Enum):
    RISING = "rising"
    FALLING = "falling"
    NONE = "none"


@dataclass
class PowerRail:
    """A supply rail reduced to its name, nominal voltage, and on/off state."""

    name: str
    nominal_voltage: float
    kind: str = "dc"
    energized: bool = True

    def __post_init__(self):
        if (float(self.nominal_voltage), self.kind) not in ALLOWED_RAILS:
            raise ConfigError(
                f"rail {self.name!r}: {self.nominal_voltage}V {self.kind} is not a known rail class"
            )


@dataclass(frozen=True)
class PinAssignment:
    """One GPIO line under the block/gpio labeling convention.

    Inputs are always NPN sinking, outputs always PNP sourcing; the
    electrical mode is derived from the direction and verified here.
    """

    direction: Direction
    block: int
    gpio: int
    electrical_mode: ElectricalMode = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.electrical_mode is None:
            mode = (
                ElectricalMode.SINKING_NPN
                if self.direction is Direction.INPUT
                else ElectricalMode.SOURCING_PNP
            )
            object.__setattr__(self, "electrical_mode", mode)
        expected = (
            ElectricalMode.SINKING_NPN
            if self.direction is Direction.INPUT
            else ElectricalMode.SOURCING_PNP
        )
        if self.electrical_mode is not expected:
            raise ConfigError(
                f"{self.direction.value} pin cannot be {self.electrical_mode.value}"
            )
        if self.block < 1:
            raise ConfigError(f"block must be positive, got {self.block}")
        if self.gpio < 0:
            raise ConfigError(f"gpio must be non-negative, got {self.gpio}")


def input_pin(block: int, gpio: int) -> PinAssignment:
    return PinAssignment(Direction.INPUT, block, gpio)


def output_pin(block: int, gpio: int) -> PinAssignment:
    return PinAssignment(Direction.OUTPUT, block, gpio)


@dataclass(frozen=True)
class SignalState:
    """Sampled state of one line: physical level plus its logical reading."""

    physical_level: Level
    asserted: bool
    last_change_us: int = 0


def asserted_for_level(mode: ElectricalMode, level: Level) -> bool:
    """Polarity mapping: sinking inputs are active-low, sourcing outputs active-high."""
    if mode is ElectricalMode.SINKING_NPN:
        return level is Level.LOW
    return level is Level.HIGH


def level_for_asserted(mode: ElectricalMode, asserted: bool) -> Level:
    """Inverse of :func:`asserted_for_level`; the pair is involutive."""
    if mode is ElectricalMode.SINKING_NPN:
        return Level.LOW if asserted else Level.HIGH
    return Level.HIGH if asserted else Level.LOW


def make_signal(mode: ElectricalMode, asserted: bool, now_us: int = 0) -> SignalState:
    return SignalState(level_for_asserted(mode, asserted), asserted, now_us)


def format_label(pin: PinAssignment) -> str:
    """Render a pin as its cell-wide label, e.g. ``I:1/2``."""
    prefix = "I" if pin.direction is Direction.INPUT else "O"
    return f"{prefix}:{pin.block}/{pin.gpio}"


def parse_label(text: str) -> PinAssignment:
    """Parse a pin label; exact inverse of :func:`format_label`.

    Raises ParseError naming the offending token on malformed input.
    """
    head, colon, rest = text.partition(":")
    if not colon:
        raise ParseError(f"label {text!r}: missing ':' separator")
    if head == "I":
        direction = Direction.INPUT
    elif head == "O":
        direction = Direction.OUTPUT
    else:
        raise ParseError(f"label {text!r}: invalid direction prefix {head!r}")
    block_text, slash, gpio_text = rest.partition("/")
    if not slash:
        raise ParseError(f"label {text!r}: missing '/' separator")
    if not block_text.isdigit():
        raise ParseError(f"label {text!r}: invalid block token {block_text!r}")
    if not gpio_text.isdigit():
        raise ParseError(f"label {text!r}: invalid gpio token {gpio_text!r}")
    block = int(block_text)
    if block < 1:
        raise ParseError(f"label {text!r}: block must be >= 1, got {block_text!r}")
    return PinAssignment(direction, block, int(gpio_text))


def detect_edge(previous: SignalState, current: SignalState) -> Edge:
    """Classify the logical transition between two samples of the same pin."""
    if not previous.asserted and current.asserted:
        return Edge.RISING
    if previous.asserted and not current.asserted:
        return Edge.FALLING
    return Edge.NONE


def debounce(
    raw_samples: Sequence[tuple[int, Level]],
    window_us: int = DEFAULT_DEBOUNCE_US,
    until_us: int | None = None,
) -> list[tuple[int, Level]]:
    """Suppress contact chatter from a time-ordered sample sequence.

    A transition is committed only once the raw level has held for at least
    ``window_us``; the committed timestamp is the raw change time plus the
    window.  Returns the stable sequence, starting with the initial state at
    the first sample's timestamp.  ``until_us`` extends the observation past
    the final sample (defaults to the final sample time).
    """
    if window_us <= 0:
        raise InputError(f"debounce window must be positive, got {window_us}")
    samples = list(raw_samples)
    if not samples:
        return []
    last_t = None
    for t, _level in samples:
        if last_t is not None and t < last_t:
            raise InputError(f"samples not time-ordered at t={t}")
        last_t = t
    end_us = samples[-1][0] if until_us is None else max(until_us, samples[-1][0])

    stable: list[tuple[int, Level]] = [(samples[0][0], samples[0][1])]
    committed = samples[0][1]
    candidate = samples[0][1]
    candidate_since = samples[0][0]
    for t, level in samples[1:]:
        if level is candidate:
            continue
        # Candidate change; commit the previous candidate if it held long enough.
        if candidate is not committed and t - candidate_since >= window_us:
            stable.append((candidate_since + window_us, candidate))
            committed = candidate
        candidate = level
        candidate_since = t
    if candidate is not committed and end_us - candidate_since >= window_us:
        stable.append((candidate_since + window_us, candidate))
    return stable


@dataclass(frozen=True)
class PinDef:
    """A registry entry: assignment plus its functional name."""

    assignment: PinAssignment
    name: str
    description: str = ""

    @property
    def label(self) -> str:
        return format_label(self.assignment)


class PinRegistry:
    """Cell-wide pin table, seeded once from a pin-map file and then frozen.

    Uniqueness is enforced on both (direction, block, gpio) and the
    functional name.
    """

    def __init__(self):
        self._by_key: dict[tuple[Direction, int, int], PinDef] = {}
        self._by_name: dict[str, PinDef] = {}
        self._frozen = False

    def add(self, pin: PinDef) -> None:
        if self._frozen:
            raise ConfigError("pin registry is frozen")
        key = (pin.assignment.direction, pin.assignment.block, pin.assignment.gpio)
        if key in self._by_key:
            raise ConfigError(f"duplicate pin {pin.label} (already {self._by_key[key].name!r})")
        if pin.name in self._by_name:
            raise ConfigError(f"duplicate pin name {pin.name!r}")
        self._by_key[key] = pin
        self._by_name[pin.name] = pin

    def freeze(self) -> "PinRegistry":
        self._frozen = True
        return self

    def by_name(self, name: str) -> PinDef:
        try:
            return self._by_name[name]
        except KeyError:
            raise ConfigError(f"unknown pin name {name!r}") from None

    def by_label(self, label: str) -> PinDef:
        pin = parse_label(label)
        key = (pin.direction, pin.block, pin.gpio)
        try:
            return self._by_key[key]
        except KeyError:
            raise ConfigError(f"no pin registered at {label}") from None

    @property
    def pins(self) -> Mapping[str, PinDef]:
        return MappingProxyType(self._by_name)

    def __len__(self) -> int:
        return len(self._by_key)

    def __iter__(self):
        return iter(self._by_key.values())


def load_pinmap(source: str | Path) -> PinRegistry:
    """Build a registry from pin-map text or a file path.

    Format: one ``LABEL,NAME,DESCRIPTION`` line per pin; ``#`` starts a
    comment.  The description may itself contain commas.
    """
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif "\n" not in source and Path(source).is_file():
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    registry = PinRegistry()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",", 2)
        if len(parts) < 2:
            raise ParseError(f"pin-map line {lineno}: expected LABEL,NAME[,DESCRIPTION]")
        label, name = parts[0].strip(), parts[1].strip()
        description = parts[2].strip() if len(parts) == 3 else ""
        if not name:
            raise ParseError(f"pin-map line {lineno}: empty pin name")
        try:
            assignment = parse_label(label)
        except ParseError as exc:
            raise ParseError(f"pin-map line {lineno}: {exc}") from None
        registry.add(PinDef(assignment, name, description))
    return registry.freeze()


def default_pinmap() -> PinRegistry:
    """Registry from the bundled best-effort pin map (non-authoritative)."""
    from importlib import resources

    text = resources.files("acat").joinpath("fixtures/pinmap_default.txt").read_text("utf-8")
    return load_pinmap(text)


class OutputBank:
    """Tracks output signal states and their supply rails.

    De-energizing a rail forces every dependent output to deasserted in the
    same call, mirroring a branch losing power mid-tick.
    """

    def __init__(self, rails: Iterable[PowerRail]):
        self.rails: dict[str, PowerRail] = {r.name: r for r in rails}
        self._states: dict[str, SignalState] = {}
        self._rail_of: dict[str, str] = {}

    def register(self, name: str, rail: str, now_us: int = 0) -> None:
        if rail not in self.rails:
            raise ConfigError(f"unknown rail {rail!r}")
        self._rail_of[name] = rail
        self._states[name] = make_signal(ElectricalMode.SOURCING_PNP, False, now_us)

    def set_output(self, name: str, asserted: bool, now_us: int) -> SignalState:
        rail = self.rails[self._rail_of[name]]
        effective = asserted and rail.energized
        prev = self._states[name]
        if prev.asserted != effective:
            self._states[name] = make_signal(ElectricalMode.SOURCING_PNP, effective, now_us)
        return self._states[name]

    def set_rail(self, rail_name: str, energized: bool, now_us: int) -> None:
        self.rails[rail_name].energized = energized
        if not energized:
            for out, rail in self._rail_of.items():
                if rail == rail_name and self._states[out].asserted:
                    self._states[out] = make_signal(ElectricalMode.SOURCING_PNP, False, now_us)

    def state(self, name: str) -> SignalState:
        return self._states[name]
