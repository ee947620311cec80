import pytest

from acat.sequencer import CellPoses, TrayLayout
from acat.simkernel import Injection, Scenario


def make_small_scenario(columns=2, rows=2, seed=3, injections=None):
    """Compact cell: short moves so plain tick-by-tick runs stay fast."""
    scenario = Scenario(seed=seed)
    scenario.layout = TrayLayout(
        columns=columns, rows=rows, origin_mm=(20.0, 50.0), pitch_mm=(20.0, 20.0)
    )
    scenario.poses = CellPoses(
        test_station_mm=(60.0, 120.0),
        unload_mm=(80.0, 160.0),
        dispenser_drop_mm=30.0,
        dispenser_park_mm=0.0,
    )
    if injections is None:
        injections = [Injection(1_000, "start_press", {})]
    scenario.injections = injections
    return scenario


@pytest.fixture
def small_scenario():
    return make_small_scenario
