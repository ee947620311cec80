"""Water path and vacuum end effector.

The water path is a reservoir fed by a diaphragm pump and drained through
a pneumatically pulsed anti-drip valve: one timed air burst releases one
droplet.  Pick-and-place uses a venturi vacuum cup with a part-present
sensor.  Volumes are tracked in millilitres with droplets in microlitres;
the reservoir is decremented by the nominal droplet volume so batch mass
accounting stays exact, while the droplet record carries the noisy actual
volume.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DryDispense, StateError

DEFAULT_FLOW_RATE_ML_MIN = 1300.0
DEFAULT_RESERVOIR_CAPACITY_ML = 250.0
DEFAULT_RESERVOIR_LEVEL_ML = 100.0
DEFAULT_DROPLET_UL = 10.0
DEFAULT_BURST_US = 50_000  # valve burst calibrated so 50 ms releases one nominal droplet
DROPLET_SIGMA_REL = 0.01
DROPLET_CLIP_REL = 0.02


@dataclass(frozen=True)
class PumpSpec:
    flow_rate_ml_min: float = DEFAULT_FLOW_RATE_ML_MIN
    supply_voltage: float = 12.0
    fuse_a: float = 1.6

    @property
    def flow_rate_ml_s(self) -> float:
        return self.flow_rate_ml_min / 60.0


@dataclass
class Reservoir:
    capacity_ml: float = DEFAULT_RESERVOIR_CAPACITY_ML
    level_ml: float = DEFAULT_RESERVOIR_LEVEL_ML

    def __post_init__(self):
        if not (0.0 <= self.level_ml <= self.capacity_ml):
            raise ValueError(f"level {self.level_ml} outside [0, {self.capacity_ml}]")


@dataclass(frozen=True)
class PumpRunResult:
    delta_ml: float
    overfilled: bool


def pump_run(pump: PumpSpec, reservoir: Reservoir, duration_s: float) -> PumpRunResult:
    """Integrate pump inflow over ``duration_s``, clamping at capacity.

    The caller is responsible for truncating the duration if power drops
    mid-run; this function just does the volume arithmetic.
    """
    inflow = pump.flow_rate_ml_s * max(duration_s, 0.0)
    headroom = reservoir.capacity_ml - reservoir.level_ml
    delta = min(inflow, headroom)
    reservoir.level_ml += delta
    return PumpRunResult(delta_ml=delta, overfilled=inflow > headroom)


@dataclass(frozen=True)
class DispenseSpec:
    droplet_volume_ul: float = DEFAULT_DROPLET_UL
    burst_duration_us: int = DEFAULT_BURST_US
    anti_drip: bool = True
    noise_sigma_rel: float = DROPLET_SIGMA_REL
    noise_clip_rel: float = DROPLET_CLIP_REL

    def __post_init__(self):
        if self.droplet_volume_ul <= 0:
            raise ValueError("droplet volume must be positive")


@dataclass(frozen=True)
class Droplet:
    volume_ul: float        # actual released volume (with valve noise)
    nominal_ul: float       # volume debited from the reservoir


def draw_droplet(spec: DispenseSpec, rng: np.random.Generator) -> Droplet:
    """Sample one droplet: Gaussian valve noise, clipped at the precision band."""
    eps = float(rng.normal(0.0, spec.noise_sigma_rel))
    eps = float(np.clip(eps, -spec.noise_clip_rel, spec.noise_clip_rel))
    return Droplet(
        volume_ul=spec.droplet_volume_ul * (1.0 + eps),
        nominal_ul=spec.droplet_volume_ul,
    )


def dispense(spec: DispenseSpec, reservoir: Reservoir, rng: np.random.Generator) -> Droplet:
    """Release exactly one droplet and debit the reservoir.

    Raises DryDispense when the reservoir cannot supply the nominal volume.
    Position and safety preconditions are enforced by the sequencing layer.
    """
    nominal_ml = spec.droplet_volume_ul / 1000.0
    if reservoir.level_ml < nominal_ml:
        raise DryDispense(
            f"reservoir at {reservoir.level_ml:.4f} mL cannot supply {nominal_ml:.4f} mL"
        )
    droplet = draw_droplet(spec, rng)
    reservoir.level_ml -= nominal_ml
    return droplet


@dataclass(frozen=True)
class VacuumGripper:
    venturi_on: bool = False
    gripped: bool = False


@dataclass(frozen=True)
class GripResult:
    gripper: VacuumGripper
    picked: bool  # False means the cup closed on nothing (pick miss)


def grip(gripper: VacuumGripper, part_present: bool) -> GripResult:
    """Energize the venturi over a part slot.

    With a part present the cup seals and holds; over an empty slot the
    vacuum never seals, which the caller reports as a pick miss.
    """
    if gripper.gripped:
        raise StateError("grip requested while already holding a part")
    if part_present:
        return GripResult(VacuumGripper(venturi_on=True, gripped=True), picked=True)
    return GripResult(VacuumGripper(venturi_on=True, gripped=False), picked=False)


def release(gripper: VacuumGripper) -> VacuumGripper:
    """Vent the cup; always leaves the gripper empty with the venturi off."""
    return VacuumGripper(venturi_on=False, gripped=False)
