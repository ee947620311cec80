"""Scenario files: every knob of one simulated run plus its fault script.

A scenario is plain JSON validated against the packaged schema
(``acat/schemas/scenario.schema.json``).  Everything is optional except
what the schema marks required; omitted sections fall back to the stock
cell configuration.  Injections are timed input mutations applied at the
first tick at or after their timestamp.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from ..errors import ConfigError, ScenarioError
from ..fluidics import DispenseSpec, PumpSpec, Reservoir
from ..goniometry import MeasurementConfig
from ..motion import StepperAxisConfig, default_axis_configs
from ..safety import SafetyConfig
from ..sequencer import CellPoses, FaultPolicy, TrayLayout

INJECTION_KINDS = frozenset(
    {
        "estop_press",
        "estop_release",
        "door_open",
        "door_close",
        "channel_stuck",
        "part_missing",
        "pump_dry",
        "sensor_suppress",
        "stop_press",
        "start_press",
        "reset_press",
    }
)

DEFAULT_TICK_US = 1_000
DEFAULT_TIME_LIMIT_US = 3_600_000_000  # one hour of simulated time
DEFAULT_SURFACE_THETA_DEG = 75.0
DEFAULT_MEASURE_TIME_US = 1_000_000
DEFAULT_Z_CONFIRM_MARGIN_US = 50_000
DEFAULT_START_OFFSETS = {"x": 400, "y": 400, "dispenser": 200}


@dataclass(frozen=True)
class Injection:
    t_us: int
    kind: str
    params: dict = field(default_factory=dict)


@dataclass
class Scenario:
    seed: int = 0
    tick_us: int = DEFAULT_TICK_US
    time_limit_us: int = DEFAULT_TIME_LIMIT_US
    layout: TrayLayout = field(default_factory=TrayLayout)
    axes: dict[str, StepperAxisConfig] = field(default_factory=default_axis_configs)
    axis_start_offset_steps: dict[str, int] = field(
        default_factory=lambda: dict(DEFAULT_START_OFFSETS)
    )
    z_stroke_time_us: int = 300_000
    z_confirm_margin_us: int = DEFAULT_Z_CONFIRM_MARGIN_US
    safety: SafetyConfig = field(default_factory=SafetyConfig)
    pump: PumpSpec = field(default_factory=PumpSpec)
    reservoir: Reservoir = field(default_factory=Reservoir)
    dispense: DispenseSpec = field(default_factory=DispenseSpec)
    poses: CellPoses = field(default_factory=CellPoses)
    measurement: MeasurementConfig = field(default_factory=MeasurementConfig)
    measure_time_us: int = DEFAULT_MEASURE_TIME_US
    surface_theta_deg: float | list[float] = DEFAULT_SURFACE_THETA_DEG
    fault_policy: FaultPolicy = FaultPolicy.SKIP_PART
    injections: list[Injection] = field(default_factory=list)

    def theta_for_part(self, part_index: int) -> float:
        """True surface angle for the 0-based part index."""
        if isinstance(self.surface_theta_deg, list):
            return self.surface_theta_deg[part_index % len(self.surface_theta_deg)]
        return self.surface_theta_deg


def _schema() -> dict:
    text = resources.files("acat").joinpath("schemas/scenario.schema.json").read_text("utf-8")
    return json.loads(text)


def scenario_from_dict(raw: dict) -> Scenario:
    """Validate and materialize a scenario; raises ScenarioError with context."""
    try:
        jsonschema.validate(raw, _schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"scenario field {path}: {exc.message}") from None
    try:
        return _build_scenario(raw)
    except ConfigError as exc:
        raise ScenarioError(str(exc)) from None


def _build_scenario(raw: dict) -> Scenario:
    scenario = Scenario()
    if "seed" in raw:
        scenario.seed = raw["seed"]
    if "tick_us" in raw:
        scenario.tick_us = raw["tick_us"]
    if "time_limit_us" in raw:
        scenario.time_limit_us = raw["time_limit_us"]

    layout_raw = raw.get("layout", {})
    scenario.layout = TrayLayout(
        columns=layout_raw.get("columns", 5),
        rows=layout_raw.get("rows", 5),
        origin_mm=tuple(layout_raw.get("origin_mm", (50.0, 100.0))),
        pitch_mm=tuple(layout_raw.get("pitch_mm", (60.0, 60.0))),
    )

    axes = default_axis_configs()
    for name, overrides in raw.get("axes", {}).items():
        base = axes[name]
        axes[name] = StepperAxisConfig(
            name=name,
            travel_per_rev_mm=overrides.get("travel_per_rev_mm", base.travel_per_rev_mm),
            steps_per_rev=overrides.get("steps_per_rev", base.steps_per_rev),
            pulse_rate_hz=overrides.get("pulse_rate_hz", base.pulse_rate_hz),
            min_steps=overrides.get("min_steps", base.min_steps),
            max_steps=overrides.get("max_steps", base.max_steps),
            backoff_steps=overrides.get("backoff_steps", base.backoff_steps),
            drive_fuse_a=overrides.get("drive_fuse_a", base.drive_fuse_a),
        )
    scenario.axes = axes

    offsets = dict(DEFAULT_START_OFFSETS)
    offsets.update(raw.get("axis_start_offset_steps", {}))
    scenario.axis_start_offset_steps = offsets

    z_raw = raw.get("z", {})
    scenario.z_stroke_time_us = z_raw.get("stroke_time_us", 300_000)
    scenario.z_confirm_margin_us = z_raw.get("confirm_margin_us", DEFAULT_Z_CONFIRM_MARGIN_US)

    safety_raw = raw.get("safety", {})
    scenario.safety = SafetyConfig(
        discrepancy_window_us=safety_raw.get("discrepancy_window_us", 500_000)
    )

    flu = raw.get("fluidics", {})
    scenario.pump = PumpSpec(flow_rate_ml_min=flu.get("pump_flow_rate_ml_min", 1300.0))
    scenario.reservoir = Reservoir(
        capacity_ml=flu.get("reservoir_capacity_ml", 250.0),
        level_ml=flu.get("reservoir_level_ml", 100.0),
    )
    scenario.dispense = DispenseSpec(
        droplet_volume_ul=flu.get("droplet_volume_ul", 10.0),
        burst_duration_us=flu.get("burst_duration_us", 50_000),
    )

    poses_raw = raw.get("poses", {})
    scenario.poses = CellPoses(
        test_station_mm=tuple(poses_raw.get("test_station_mm", (150.0, 700.0))),
        unload_mm=tuple(poses_raw.get("unload_mm", (300.0, 1100.0))),
        dispenser_drop_mm=poses_raw.get("dispenser_drop_mm", 150.0),
        dispenser_park_mm=poses_raw.get("dispenser_park_mm", 0.0),
    )

    meas = raw.get("measurement", {})
    scenario.measurement = MeasurementConfig(
        n_points=meas.get("n_points", 200),
        noise_rel_sigma=meas.get("noise_rel_sigma", 0.005),
    )
    scenario.measure_time_us = meas.get("measure_time_us", DEFAULT_MEASURE_TIME_US)

    if "surface_theta_deg" in raw:
        value = raw["surface_theta_deg"]
        scenario.surface_theta_deg = list(value) if isinstance(value, list) else float(value)

    scenario.fault_policy = FaultPolicy(raw.get("fault_policy", "skip_part"))

    injections = []
    last_t = 0
    for index, item in enumerate(raw.get("injections", [])):
        if item["kind"] not in INJECTION_KINDS:
            raise ScenarioError(f"injections[{index}]: unknown kind {item['kind']!r}")
        if item["t_us"] < last_t:
            raise ScenarioError(f"injections[{index}]: times must be non-decreasing")
        last_t = item["t_us"]
        injections.append(Injection(item["t_us"], item["kind"], dict(item.get("params", {}))))
    scenario.injections = injections

    _check_layout_fits(scenario)
    return scenario


def _check_layout_fits(scenario: Scenario) -> None:
    from ..motion import mm_to_steps
    from ..sequencer import part_position

    corners = [
        part_position(scenario.layout, scenario.layout.columns - 1, scenario.layout.rows - 1),
        scenario.poses.test_station_mm,
        scenario.poses.unload_mm,
    ]
    for x_mm, y_mm in corners:
        for axis, mm in (("x", x_mm), ("y", y_mm)):
            cfg = scenario.axes[axis]
            steps, _ = mm_to_steps(cfg, mm)
            if not (cfg.min_steps <= steps <= cfg.max_steps):
                raise ScenarioError(
                    f"pose {mm} mm on axis {axis} is outside the soft limits"
                )


def load_scenario(path: str | Path) -> Scenario:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return scenario_from_dict(raw)


def default_scenario(seed: int = 0, injections: list[Injection] | None = None) -> Scenario:
    """Stock healthy run: start pressed at t=1 ms, no faults injected."""
    scenario = Scenario(seed=seed)
    scenario.injections = (
        injections if injections is not None else [Injection(1_000, "start_press", {})]
    )
    return scenario
