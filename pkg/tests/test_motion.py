import random

import pytest

from acat.errors import ConfigError, HomingTimeout, LimitError, NotHomed
from acat.motion import (
    CellGeometry,
    MoveProfile,
    PneumaticZ,
    StepperAxis,
    StepperAxisConfig,
    ZPole,
    default_axis_configs,
    home,
    mm_to_steps,
    plan_move,
    steps_to_mm,
    z_begin,
    z_complete,
)

X_CFG = default_axis_configs()["x"]


def homed_axis(cfg=X_CFG, position=0):
    return StepperAxis(cfg=cfg, position_steps=position, homed=True)


class TestPlanMove:
    def test_800_steps_at_400hz_takes_exactly_2s(self):
        profile = plan_move(homed_axis(), 800)
        assert profile.duration_us == 2_000_000
        assert profile.pulse_period_us == 2500

    def test_zero_delta(self):
        profile = plan_move(homed_axis(position=500), 500)
        assert profile.delta_steps == 0
        assert profile.duration_us == 0

    def test_unhomed_rejected(self):
        with pytest.raises(NotHomed):
            plan_move(StepperAxis(cfg=X_CFG), 100)

    def test_outside_limits_rejected(self):
        with pytest.raises(LimitError):
            plan_move(homed_axis(), X_CFG.max_steps + 1)
        with pytest.raises(LimitError):
            plan_move(homed_axis(), X_CFG.min_steps - 1)

    def test_random_profiles_land_on_target(self):
        # Step-counting oracle: replay the pulse train one pulse at a time.
        rng = random.Random(42)
        for _ in range(200):
            start = rng.randint(0, X_CFG.max_steps)
            target = rng.randint(0, X_CFG.max_steps)
            profile = plan_move(homed_axis(position=start), target)
            position = start
            for pulse in range(1, abs(profile.delta_steps) + 1):
                position = start + pulse * profile.direction
            assert position == target
            assert profile.steps_after(profile.duration_us) == profile.delta_steps
            assert start + profile.steps_after(profile.duration_us) == target

    def test_steps_after_is_floor_of_elapsed(self):
        profile = MoveProfile(axis="x", start_steps=0, delta_steps=10, pulse_period_us=2500)
        assert profile.steps_after(0) == 0
        assert profile.steps_after(2499) == 0
        assert profile.steps_after(2500) == 1
        assert profile.steps_after(24_999) == 9
        assert profile.steps_after(10**9) == 10


class TestConversions:
    def test_x_lead_5mm_200_steps_is_one_rev(self):
        assert steps_to_mm(X_CFG, 200) == pytest.approx(5.0, abs=1e-12)

    def test_zero(self):
        assert steps_to_mm(X_CFG, 0) == 0.0

    def test_roundtrip_exact_for_integers(self):
        for cfg in default_axis_configs().values():
            for s in range(-1000, 5001, 7):
                back, residual = mm_to_steps(cfg, steps_to_mm(cfg, s))
                assert back == s
                assert abs(residual) < 1e-9

    def test_residual_reported(self):
        steps, residual = mm_to_steps(X_CFG, 5.01)  # 200.4 steps
        assert steps == 200
        assert residual == pytest.approx(0.01, abs=1e-9)

    def test_rate_must_divide_1mhz(self):
        with pytest.raises(ConfigError):
            StepperAxisConfig(name="x", travel_per_rev_mm=5.0, pulse_rate_hz=300)


class TestHoming:
    def test_switch_after_1200_steps(self):
        axis = StepperAxis(cfg=X_CFG)
        result = home(axis, lambda steps: steps >= 1200)
        assert result.steps_to_switch == 1200
        assert result.backoff_steps == X_CFG.backoff_steps == 50
        assert result.axis.position_steps == 0
        assert result.axis.homed is True

    def test_already_at_switch(self):
        result = home(StepperAxis(cfg=X_CFG), lambda steps: True)
        assert result.steps_to_switch == 0
        assert result.axis.position_steps == 0

    def test_timeout_with_predicate(self):
        with pytest.raises(HomingTimeout):
            home(StepperAxis(cfg=X_CFG), lambda steps: False, max_travel_steps=500)

    def test_stream_form(self):
        from acat.signals import ElectricalMode, make_signal

        stream = [make_signal(ElectricalMode.SINKING_NPN, i >= 3) for i in range(10)]
        result = home(StepperAxis(cfg=X_CFG), iter(stream))
        assert result.steps_to_switch == 3

    def test_exhausted_stream_times_out(self):
        from acat.signals import ElectricalMode, make_signal

        stream = [make_signal(ElectricalMode.SINKING_NPN, False) for _ in range(5)]
        with pytest.raises(HomingTimeout):
            home(StepperAxis(cfg=X_CFG), iter(stream))


class TestPneumaticZ:
    def test_stroke_timing(self):
        z = PneumaticZ(stroke_time_us=300_000)
        moving, deadline = z_begin(z, ZPole.DOWN, now_us=1_000_000)
        assert moving.confirmed is ZPole.IN_TRANSIT
        assert deadline == 1_300_000
        landed = z_complete(moving)
        assert landed.confirmed is ZPole.DOWN
        assert landed.sensor_down is True
        assert landed.sensor_up is False

    def test_noop_when_already_at_pole(self):
        z = PneumaticZ()
        same, deadline = z_begin(z, ZPole.UP, now_us=500)
        assert deadline is None
        assert same.confirmed is ZPole.UP

    def test_invalid_direction(self):
        with pytest.raises(ConfigError):
            z_begin(PneumaticZ(), ZPole.IN_TRANSIT, 0)


class TestGeometry:
    def test_defaults_valid(self):
        geometry = CellGeometry()
        assert geometry.y_travel_mm == 1360.0
        assert geometry.enclosure_mm == (1475.0, 650.0, 1680.0)

    def test_rejects_nonpositive(self):
        with pytest.raises(ConfigError):
            CellGeometry(y_travel_mm=0)

    def test_default_y_limits_cover_full_span(self):
        y = default_axis_configs()["y"]
        assert steps_to_mm(y, y.max_steps) == pytest.approx(1360.0)
