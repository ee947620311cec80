import random

import numpy as np
import pytest

from acat.errors import DryDispense, StateError
from acat.fluidics import (
    DispenseSpec,
    PumpSpec,
    Reservoir,
    VacuumGripper,
    dispense,
    draw_droplet,
    grip,
    pump_run,
    release,
)


class TestPump:
    def test_one_second_at_1300_ml_min(self):
        reservoir = Reservoir(capacity_ml=250.0, level_ml=100.0)
        result = pump_run(PumpSpec(), reservoir, 1.0)
        assert result.delta_ml == pytest.approx(1300.0 / 60.0, abs=5e-4)
        assert round(result.delta_ml, 3) == 21.667
        assert result.overfilled is False

    def test_zero_duration(self):
        reservoir = Reservoir(level_ml=10.0)
        assert pump_run(PumpSpec(), reservoir, 0.0).delta_ml == 0.0
        assert reservoir.level_ml == 10.0

    def test_truncated_run_partial_delta(self):
        # Clock-integration oracle: a run cut at 0.5 s delivers rate * 0.5.
        reservoir = Reservoir(level_ml=50.0)
        result = pump_run(PumpSpec(), reservoir, 0.5)
        assert result.delta_ml == pytest.approx(1300.0 / 60.0 * 0.5, abs=1e-9)
        assert round(result.delta_ml, 3) == 10.833

    def test_clamped_at_capacity_flags_overfill(self):
        reservoir = Reservoir(capacity_ml=100.0, level_ml=99.0)
        result = pump_run(PumpSpec(), reservoir, 10.0)
        assert reservoir.level_ml == pytest.approx(100.0)
        assert result.delta_ml == pytest.approx(1.0)
        assert result.overfilled is True


class TestDispense:
    def test_10ul_from_100ml(self):
        reservoir = Reservoir(level_ml=100.0)
        droplet = dispense(DispenseSpec(), reservoir, np.random.default_rng(0))
        assert droplet.nominal_ul == 10.0
        assert reservoir.level_ml == pytest.approx(99.990, abs=1e-12)

    def test_empty_reservoir_raises(self):
        reservoir = Reservoir(level_ml=0.0)
        with pytest.raises(DryDispense):
            dispense(DispenseSpec(), reservoir, np.random.default_rng(0))

    def test_25_sequential_dispenses(self):
        reservoir = Reservoir(level_ml=100.0)
        rng = np.random.default_rng(1)
        droplets = [dispense(DispenseSpec(), reservoir, rng) for _ in range(25)]
        assert len(droplets) == 25
        assert reservoir.level_ml == pytest.approx(100.0 - 0.250, abs=1e-9)

    def test_noise_clipped_at_2_percent(self):
        rng = np.random.default_rng(7)
        spec = DispenseSpec()
        for _ in range(5000):
            droplet = draw_droplet(spec, rng)
            assert abs(droplet.volume_ul - 10.0) <= 10.0 * 0.02 + 1e-12

    def test_noise_sigma_close_to_1_percent(self):
        rng = np.random.default_rng(3)
        spec = DispenseSpec()
        volumes = np.array([draw_droplet(spec, rng).volume_ul for _ in range(20_000)])
        sigma_rel = volumes.std() / 10.0
        assert 0.008 < sigma_rel < 0.012

    def test_deterministic_for_seed(self):
        a = [draw_droplet(DispenseSpec(), np.random.default_rng(5)).volume_ul for _ in range(1)]
        b = [draw_droplet(DispenseSpec(), np.random.default_rng(5)).volume_ul for _ in range(1)]
        assert a == b

    def test_mass_conservation_over_random_traces(self):
        # Reservoir delta must equal pump inflow minus nominal outflow, 1e-9 mL.
        rng = random.Random(17)
        noise = np.random.default_rng(17)
        for _ in range(50):
            reservoir = Reservoir(capacity_ml=500.0, level_ml=200.0)
            expected = reservoir.level_ml
            for _ in range(rng.randint(1, 40)):
                if rng.random() < 0.3:
                    duration = rng.random()
                    inflow = min(PumpSpec().flow_rate_ml_s * duration,
                                 reservoir.capacity_ml - reservoir.level_ml)
                    pump_run(PumpSpec(), reservoir, duration)
                    expected += inflow
                else:
                    if reservoir.level_ml >= 0.01:
                        dispense(DispenseSpec(), reservoir, noise)
                        expected -= 0.01
            assert reservoir.level_ml == pytest.approx(expected, abs=1e-9)


class TestGripper:
    def test_grip_with_part(self):
        result = grip(VacuumGripper(), part_present=True)
        assert result.picked is True
        assert result.gripper.gripped is True
        assert result.gripper.venturi_on is True

    def test_grip_without_part_is_miss(self):
        result = grip(VacuumGripper(), part_present=False)
        assert result.picked is False
        assert result.gripper.gripped is False
        assert result.gripper.venturi_on is True  # venturi ran, cup never sealed

    def test_release_always_clears(self):
        held = grip(VacuumGripper(), True).gripper
        released = release(held)
        assert released.gripped is False
        assert released.venturi_on is False

    def test_double_grip_rejected(self):
        held = grip(VacuumGripper(), True).gripper
        with pytest.raises(StateError):
            grip(held, True)
