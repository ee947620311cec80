"""Synthetic droplet metrology.

A resting droplet small enough to ignore gravity is modeled as a spherical
cap sitting on the baseline (y up, in millimetres).  The measurement
pipeline mirrors an optical goniometer: generate profile points along the
cap's arc, add seeded radial noise, fit a circle algebraically, and read
the contact angle where the fitted circle meets the baseline:

    cos(theta) = (baseline_y - center_y) / radius

so a center above the baseline gives an angle past 90 degrees.  The fit is
the closed-form algebraic least-squares circle (no iteration); coordinates
are centered first to keep the normal equations well conditioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCap, FitError, InputError, MeasurementFault, ParseError

# Below this recovered angle the arc is too flat for a trustworthy fit.
LOW_ANGLE_LIMIT_DEG = 5.0

MIN_PROFILE_POINTS = 5


@dataclass(frozen=True)
class SphericalCap:
    """Droplet geometry: all lengths in mm, volume in microlitres (= mm^3)."""

    theta_deg: float
    volume_ul: float
    sphere_radius_mm: float
    base_radius_mm: float
    apex_height_mm: float


def _cap_shape_factor(theta_rad: float) -> float:
    # (1 - cos)^2 (2 + cos), written via sin(theta/2) so flat caps keep
    # full precision (the expanded polynomial cancels catastrophically).
    half_sin = math.sin(theta_rad / 2.0)
    return 4.0 * half_sin**4 * (2.0 + math.cos(theta_rad))


def cap_volume_ul(sphere_radius_mm: float, theta_deg: float) -> float:
    """Volume of a cap with the given sphere radius and contact angle."""
    t = math.radians(theta_deg)
    return math.pi / 3.0 * sphere_radius_mm**3 * _cap_shape_factor(t)


def cap_from_volume_angle(volume_ul: float, theta_deg: float) -> SphericalCap:
    """Solve the cap that holds ``volume_ul`` at contact angle ``theta_deg``."""
    if not 0.0 < theta_deg < 180.0:
        raise DegenerateCap(f"contact angle {theta_deg} deg outside (0, 180)")
    if volume_ul <= 0.0:
        raise InputError(f"volume must be positive, got {volume_ul}")
    t = math.radians(theta_deg)
    shape = _cap_shape_factor(t)
    radius = (3.0 * volume_ul / (math.pi * shape)) ** (1.0 / 3.0)
    return SphericalCap(
        theta_deg=theta_deg,
        volume_ul=volume_ul,
        sphere_radius_mm=radius,
        base_radius_mm=radius * math.sin(t),
        apex_height_mm=radius * 2.0 * math.sin(t / 2.0) ** 2,  # R (1 - cos), stably
    )


@dataclass(frozen=True)
class ProfilePoints:
    """Sampled droplet silhouette: (x, y) pairs in mm above the baseline."""

    points: np.ndarray
    baseline_y: float
    noise_sigma_mm: float
    seed: int | None


def synthesize_profile(
    cap: SphericalCap,
    n_points: int,
    noise_sigma_mm: float = 0.0,
    seed: int | np.random.Generator | None = 0,
    baseline_y: float = 0.0,
) -> ProfilePoints:
    """Sample the cap's arc at uniform arc angles with radial Gaussian noise.

    Deterministic for a fixed seed (or supplied generator).  The noise-free
    points satisfy the circle equation exactly, with the two endpoints on
    the baseline.
    """
    if n_points < MIN_PROFILE_POINTS:
        raise InputError(f"need at least {MIN_PROFILE_POINTS} points, got {n_points}")
    t = math.radians(cap.theta_deg)
    center_y = baseline_y - cap.sphere_radius_mm * math.cos(t)
    phi = np.linspace(-t, t, n_points)  # angle from vertical; endpoints at the baseline
    if isinstance(seed, np.random.Generator):
        rng = seed
        seed_value = None
    else:
        rng = np.random.default_rng(seed)
        seed_value = seed
    radii = cap.sphere_radius_mm + (
        rng.normal(0.0, noise_sigma_mm, size=n_points) if noise_sigma_mm > 0.0 else 0.0
    )
    pts = np.column_stack((radii * np.sin(phi), center_y + radii * np.cos(phi)))
    return ProfilePoints(
        points=pts, baseline_y=baseline_y, noise_sigma_mm=noise_sigma_mm, seed=seed_value
    )


@dataclass(frozen=True)
class CircleFit:
    center_mm: tuple[float, float]
    radius_mm: float
    rms_residual_mm: float
    contact_angle_deg: float


def fit_circle(profile: ProfilePoints | np.ndarray, baseline_y: float | None = None) -> CircleFit:
    """Algebraic least-squares circle through the profile points.

    Minimizes the linearized circle residual (x^2 + y^2 + Dx + Ey + F) in a
    centered frame, then reads the contact angle against the baseline.
    Degenerate inputs (collinear points, arc missing the baseline, angles
    in the flat-arc zone below LOW_ANGLE_LIMIT_DEG) raise FitError.
    """
    if isinstance(profile, ProfilePoints):
        pts = np.asarray(profile.points, dtype=float)
        base = profile.baseline_y if baseline_y is None else baseline_y
    else:
        pts = np.asarray(profile, dtype=float)
        base = 0.0 if baseline_y is None else baseline_y
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise FitError("need at least 3 (x, y) points")

    mean = pts.mean(axis=0)
    u = pts[:, 0] - mean[0]
    v = pts[:, 1] - mean[1]
    a_mat = np.column_stack((u, v, np.ones_like(u)))
    b_vec = -(u**2 + v**2)
    coeffs, _, rank, _ = np.linalg.lstsq(a_mat, b_vec, rcond=None)
    if rank < 3:
        raise FitError("points are collinear or otherwise degenerate")
    d_coef, e_coef, f_coef = coeffs
    r_sq = d_coef**2 / 4.0 + e_coef**2 / 4.0 - f_coef
    if not np.isfinite(r_sq) or r_sq <= 0.0:
        raise FitError("fit collapsed to a non-circle")
    radius = math.sqrt(r_sq)
    center = (float(-d_coef / 2.0 + mean[0]), float(-e_coef / 2.0 + mean[1]))

    dists = np.hypot(pts[:, 0] - center[0], pts[:, 1] - center[1])
    rms = float(np.sqrt(np.mean((dists - radius) ** 2)))

    cos_theta = (base - center[1]) / radius
    if abs(cos_theta) > 1.0 + 1e-9:
        raise FitError("fitted circle does not reach the baseline")
    theta = math.degrees(math.acos(max(-1.0, min(1.0, cos_theta))))
    if theta < LOW_ANGLE_LIMIT_DEG:
        raise FitError(
            f"recovered angle {theta:.3f} deg is below the {LOW_ANGLE_LIMIT_DEG} deg "
            "conditioning floor"
        )
    return CircleFit(
        center_mm=center, radius_mm=radius, rms_residual_mm=rms, contact_angle_deg=theta
    )


@dataclass(frozen=True)
class MeasurementConfig:
    n_points: int = 200
    noise_rel_sigma: float = 0.005  # radial sigma as a fraction of the base radius
    baseline_y: float = 0.0


@dataclass(frozen=True)
class MeasurementRecord:
    part_id: int
    theta_deg: float
    rms_residual_mm: float
    t_us: int


def measure(
    true_theta_deg: float,
    droplet_volume_ul: float,
    cfg: MeasurementConfig,
    rng: np.random.Generator | int | None,
    part_id: int = 0,
    t_us: int = 0,
) -> MeasurementRecord:
    """Full pipeline for one part: cap, noisy profile, fit, angle.

    Fit failures surface as MeasurementFault so the sequencing layer can
    apply its per-part fault policy.
    """
    cap = cap_from_volume_angle(droplet_volume_ul, true_theta_deg)
    sigma = cfg.noise_rel_sigma * cap.base_radius_mm
    profile = synthesize_profile(cap, cfg.n_points, sigma, rng, cfg.baseline_y)
    try:
        fit = fit_circle(profile)
    except FitError as exc:
        raise MeasurementFault(f"part {part_id}: {exc}") from exc
    return MeasurementRecord(
        part_id=part_id,
        theta_deg=fit.contact_angle_deg,
        rms_residual_mm=fit.rms_residual_mm,
        t_us=t_us,
    )


def read_profile(text_or_path) -> np.ndarray:
    """Parse a profile file: header ``x_mm,y_mm`` then one point per line."""
    from pathlib import Path

    source = text_or_path
    if isinstance(source, Path) or ("\n" not in str(source) and Path(str(source)).is_file()):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = str(source)
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ParseError("empty profile file")
    header = [h.strip().lower() for h in lines[0].split(",")]
    if header != ["x_mm", "y_mm"]:
        raise ParseError(f"expected header 'x_mm,y_mm', got {lines[0]!r}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"profile line {lineno}: expected two comma-separated values")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise ParseError(f"profile line {lineno}: non-numeric value") from None
    return np.asarray(rows, dtype=float)
