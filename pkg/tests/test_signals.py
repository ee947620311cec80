import random

import pytest

from acat.errors import ConfigError, InputError, ParseError
from acat.signals import (
    Direction,
    Edge,
    ElectricalMode,
    Level,
    OutputBank,
    PinAssignment,
    PinDef,
    PinRegistry,
    PowerRail,
    asserted_for_level,
    debounce,
    default_pinmap,
    detect_edge,
    format_label,
    input_pin,
    level_for_asserted,
    load_pinmap,
    make_signal,
    output_pin,
    parse_label,
)


class TestLabels:
    def test_format_input(self):
        assert format_label(input_pin(1, 2)) == "I:1/2"

    def test_format_output(self):
        assert format_label(output_pin(2, 17)) == "O:2/17"

    def test_parse_examples(self):
        assert parse_label("I:1/2") == input_pin(1, 2)
        assert parse_label("O:2/0") == output_pin(2, 0)

    def test_parse_bad_prefix_names_token(self):
        with pytest.raises(ParseError, match="'X'"):
            parse_label("X:1/2")

    @pytest.mark.parametrize("text", ["I1/2", "I:1-2", "I:a/2", "I:1/b", "I:0/2", "", ":1/2"])
    def test_parse_malformed(self, text):
        with pytest.raises(ParseError):
            parse_label(text)

    def test_roundtrip_1000_random_pins(self):
        rng = random.Random(20240917)
        for _ in range(1000):
            pin = PinAssignment(
                rng.choice((Direction.INPUT, Direction.OUTPUT)),
                rng.randint(1, 4),
                rng.randint(0, 63),
            )
            assert parse_label(format_label(pin)) == pin

    def test_direction_mode_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            PinAssignment(Direction.INPUT, 1, 2, ElectricalMode.SOURCING_PNP)
        with pytest.raises(ConfigError):
            PinAssignment(Direction.OUTPUT, 1, 2, ElectricalMode.SINKING_NPN)


class TestPolarity:
    @pytest.mark.parametrize("mode", list(ElectricalMode))
    @pytest.mark.parametrize("asserted", [True, False])
    def test_involutive(self, mode, asserted):
        level = level_for_asserted(mode, asserted)
        assert asserted_for_level(mode, level) is asserted
        assert level_for_asserted(mode, asserted_for_level(mode, level)) is level

    def test_sinking_input_is_active_low(self):
        assert asserted_for_level(ElectricalMode.SINKING_NPN, Level.LOW) is True
        assert asserted_for_level(ElectricalMode.SINKING_NPN, Level.HIGH) is False

    def test_sourcing_output_is_active_high(self):
        assert asserted_for_level(ElectricalMode.SOURCING_PNP, Level.HIGH) is True
        assert asserted_for_level(ElectricalMode.SOURCING_PNP, Level.LOW) is False


class TestEdges:
    def test_rising(self):
        prev = make_signal(ElectricalMode.SINKING_NPN, False, 0)
        cur = make_signal(ElectricalMode.SINKING_NPN, True, 10)
        assert detect_edge(prev, cur) is Edge.RISING

    def test_steady_is_none(self):
        s = make_signal(ElectricalMode.SINKING_NPN, True, 0)
        assert detect_edge(s, s) is Edge.NONE

    def test_square_wave_counting_oracle(self):
        # A wave with N logical transitions must yield exactly N edge events.
        rng = random.Random(7)
        for _ in range(50):
            n_transitions = rng.randint(0, 40)
            samples = []
            state = False
            t = 0
            samples.append(make_signal(ElectricalMode.SOURCING_PNP, state, t))
            remaining = n_transitions
            while remaining > 0:
                t += rng.randint(1, 100)
                if rng.random() < 0.7:
                    state = not state
                    remaining -= 1
                samples.append(make_signal(ElectricalMode.SOURCING_PNP, state, t))
            edges = sum(
                detect_edge(a, b) is not Edge.NONE for a, b in zip(samples, samples[1:])
            )
            assert edges == n_transitions


class TestDebounce:
    def test_chatter_shorter_than_window_suppressed(self):
        samples = [(0, Level.HIGH), (1000, Level.LOW), (2000, Level.HIGH),
                   (3500, Level.LOW), (4000, Level.HIGH)]
        stable = debounce(samples, window_us=5000, until_us=20000)
        assert stable == [(0, Level.HIGH)]

    def test_clean_transition_delayed_by_window(self):
        samples = [(0, Level.HIGH), (10_000, Level.LOW)]
        stable = debounce(samples, window_us=5000, until_us=30_000)
        assert stable == [(0, Level.HIGH), (15_000, Level.LOW)]

    def test_bounce_then_settle(self):
        samples = [(0, Level.HIGH), (1000, Level.LOW), (1500, Level.HIGH), (2000, Level.LOW)]
        stable = debounce(samples, window_us=5000, until_us=30_000)
        assert stable == [(0, Level.HIGH), (7000, Level.LOW)]

    def test_output_transitions_never_exceed_raw(self):
        rng = random.Random(99)
        for _ in range(1000):
            t = 0
            level = rng.choice((Level.HIGH, Level.LOW))
            samples = [(t, level)]
            raw_transitions = 0
            for _ in range(rng.randint(1, 30)):
                t += rng.randint(1, 8000)
                new = rng.choice((Level.HIGH, Level.LOW))
                if new is not samples[-1][1]:
                    raw_transitions += 1
                samples.append((t, new))
            stable = debounce(samples, window_us=5000, until_us=t + 10_000)
            assert len(stable) - 1 <= raw_transitions

    def test_non_monotone_rejected(self):
        with pytest.raises(InputError):
            debounce([(10, Level.HIGH), (5, Level.LOW)], window_us=100)

    def test_bad_window_rejected(self):
        with pytest.raises(InputError):
            debounce([(0, Level.HIGH)], window_us=0)


class TestRails:
    def test_known_rail_classes(self):
        for volts, kind in ((120.0, "ac"), (24.0, "dc"), (12.0, "dc"), (5.0, "dc"), (3.3, "dc")):
            PowerRail(f"r{volts}", volts, kind)

    def test_unknown_rail_rejected(self):
        with pytest.raises(ConfigError):
            PowerRail("bad", 48.0, "dc")
        with pytest.raises(ConfigError):
            PowerRail("bad", 24.0, "ac")

    def test_deenergized_rail_forces_outputs_off_same_call(self):
        bank = OutputBank([PowerRail("dc24", 24.0, "dc"), PowerRail("dc5", 5.0, "dc")])
        bank.register("drive", "dc24")
        bank.register("pilot", "dc5")
        bank.set_output("drive", True, now_us=10)
        bank.set_output("pilot", True, now_us=10)
        bank.set_rail("dc24", False, now_us=20)
        assert bank.state("drive").asserted is False
        assert bank.state("drive").last_change_us == 20
        assert bank.state("pilot").asserted is True

    def test_output_on_dead_rail_stays_deasserted(self):
        bank = OutputBank([PowerRail("dc24", 24.0, "dc")])
        bank.register("drive", "dc24")
        bank.set_rail("dc24", False, now_us=0)
        state = bank.set_output("drive", True, now_us=5)
        assert state.asserted is False


class TestPinRegistry:
    def test_load_and_lookup(self):
        text = "I:1/2,start_button,operator start\nO:2/4,light_green,tower green\n"
        registry = load_pinmap(text)
        assert len(registry) == 2
        assert registry.by_name("start_button").label == "I:1/2"
        assert registry.by_label("O:2/4").name == "light_green"

    def test_duplicate_key_rejected(self):
        text = "I:1/2,a,\nI:1/2,b,\n"
        with pytest.raises(ConfigError, match="duplicate pin"):
            load_pinmap(text)

    def test_duplicate_name_rejected(self):
        text = "I:1/2,a,\nI:1/3,a,\n"
        with pytest.raises(ConfigError, match="duplicate pin name"):
            load_pinmap(text)

    def test_same_block_gpio_opposite_direction_allowed(self):
        text = "I:1/2,a,\nO:1/2,b,\n"
        assert len(load_pinmap(text)) == 2

    def test_frozen_after_load(self):
        registry = load_pinmap("I:1/2,a,\n")
        with pytest.raises(ConfigError, match="frozen"):
            registry.add(PinDef(input_pin(1, 3), "c"))

    def test_malformed_line_reports_lineno(self):
        with pytest.raises(ParseError, match="line 2"):
            load_pinmap("I:1/2,a,\nnot-a-pin\n")

    def test_default_pinmap_loads(self):
        registry = default_pinmap()
        assert len(registry) >= 20
        assert registry.by_name("start_button").assignment.direction is Direction.INPUT
        assert registry.by_name("light_red").assignment.direction is Direction.OUTPUT
        # safety inputs are all present as dual channels
        for name in ("estop_operator", "estop_main", "door_interlock"):
            registry.by_name(f"{name}_a")
            registry.by_name(f"{name}_b")
