"""Domain types and derived geometry for the 2D roller bearing model.

Unit policy: lengths in the configuration are millimeters, masses kg,
stiffness N/m, damping N*s/m.  Simulator state is SI (m, m/s, N, s);
graph features are converted to mm and mm/s at graph construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

import numpy as np


class ConfigError(ValueError):
    """A configuration violates one of its documented invariants."""


@dataclass(frozen=True)
class BearingConfig:
    """Geometry, masses and grounding of a cylindrical roller bearing.

    Defaults are the SKF N209-class case study: pitch diameter 65.5 mm,
    roller diameter 11 mm, roller length 12 mm, inner-ring ground spring
    5e6 N/m per axis, dampers 5e4 / 1e4 N*s/m on inner / outer ring.
    Ring masses are not published for this case; the defaults are chosen
    together with the integrator step so the step response settles well
    before the load-doubling instant (see SimParams).
    """

    n_rollers: int = 15
    pitch_diameter: float = 65.5
    roller_diameter: float = 11.0
    roller_length: float = 12.0
    radial_clearance: float = 0.0  # diametral, mm
    inner_ring_mass: float = 1.2
    outer_ring_mass: float = 0.8
    ground_spring_stiffness: float = 5.0e6
    inner_damping: float = 5.0e4
    outer_damping: float = 1.0e4
    reference_angle: float = -90.0  # degrees, roller 0 at bottom dead center

    def validate(self) -> None:
        if self.n_rollers < 3:
            raise ConfigError(f"n_rollers must be >= 3, got {self.n_rollers}")
        for name in ("pitch_diameter", "roller_diameter", "roller_length",
                     "inner_ring_mass", "outer_ring_mass",
                     "ground_spring_stiffness", "inner_damping",
                     "outer_damping"):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigError(f"{name} must be > 0, got {value}")
        if self.radial_clearance < 0:
            raise ConfigError(
                f"radial_clearance must be >= 0, got {self.radial_clearance}")
        if not self.pitch_diameter > self.roller_diameter:
            raise ConfigError(
                "pitch_diameter must exceed roller_diameter "
                f"({self.pitch_diameter} <= {self.roller_diameter})")
        if not self.n_rollers * self.roller_diameter < math.pi * self.pitch_diameter:
            raise ConfigError(
                f"{self.n_rollers} rollers of diameter {self.roller_diameter} mm "
                f"do not fit on a {self.pitch_diameter} mm pitch circle")


@dataclass(frozen=True)
class DerivedGeometry:
    """Radii (mm) and fixed roller angles (radians) derived from a config."""

    inner_raceway_radius: float
    outer_raceway_radius: float
    roller_radius: float
    roller_angles: tuple[float, ...]

    @property
    def radial_units(self) -> np.ndarray:
        """Unit vectors (n_rollers x 2) pointing outward through each roller."""
        ang = np.asarray(self.roller_angles)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)


def derived_geometry(config: BearingConfig) -> DerivedGeometry:
    """Raceway radii and the uniformly spaced roller angle set."""
    config.validate()
    n = config.n_rollers
    ref = math.radians(config.reference_angle)
    angles = tuple(ref + k * 2.0 * math.pi / n for k in range(n))
    return DerivedGeometry(
        inner_raceway_radius=(config.pitch_diameter - config.roller_diameter) / 2.0,
        outer_raceway_radius=(config.pitch_diameter + config.roller_diameter) / 2.0,
        roller_radius=config.roller_diameter / 2.0,
        roller_angles=angles,
    )


def loaded_roller_index(config: BearingConfig) -> int:
    """Index of the roller nearest top dead center (+90 degrees)."""
    spacing = 360.0 / config.n_rollers
    return int(round((90.0 - config.reference_angle) / spacing)) % config.n_rollers


@dataclass(frozen=True)
class LoadSchedule:
    """Step-indexed external load: base, doubled, then restored."""

    base_load: float = 13000.0
    direction: tuple[float, float] = (0.0, -1.0)
    double_at_step: int = 2500
    restore_at_step: int = 5000

    def validate(self) -> None:
        if not self.base_load > 0:
            raise ConfigError(f"base_load must be > 0, got {self.base_load}")
        if not 0 < self.double_at_step < self.restore_at_step:
            raise ConfigError(
                "need 0 < double_at_step < restore_at_step, got "
                f"{self.double_at_step}, {self.restore_at_step}")
        norm = math.hypot(*self.direction)
        if abs(norm - 1.0) > 1e-9:
            raise ConfigError(f"direction must be a unit vector, |d| = {norm}")


@dataclass(frozen=True)
class SimParams:
    """Integration parameters.

    dt defaults to 4e-5 s: large enough that the slow, heavily overdamped
    rigid-body mode (decay rate ~ k_ground/c ~ 83 1/s) settles well before
    step 2500, small enough that the stiff contact dynamics stay inside the
    RK4 stability region for the default masses.
    """

    dt: float = 4.0e-5
    n_steps: int = 5000
    record_stride: int = 1
    seed: int = 0

    def validate(self) -> None:
        if not self.dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if self.n_steps < 0:
            raise ConfigError(f"n_steps must be >= 0, got {self.n_steps}")
        if self.record_stride < 1:
            raise ConfigError(
                f"record_stride must be >= 1, got {self.record_stride}")


@dataclass
class RigidBody2D:
    """Planar body restricted to translation: position (m), velocity (m/s)."""

    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)

    def copy(self) -> "RigidBody2D":
        return RigidBody2D(self.position.copy(), self.velocity.copy())


@dataclass
class BearingState:
    """Positions and velocities of both rings (SI units)."""

    inner: RigidBody2D
    outer: RigidBody2D

    @staticmethod
    def zero() -> "BearingState":
        return BearingState(RigidBody2D(np.zeros(2), np.zeros(2)),
                            RigidBody2D(np.zeros(2), np.zeros(2)))

    def copy(self) -> "BearingState":
        return BearingState(self.inner.copy(), self.outer.copy())

    def as_vector(self) -> np.ndarray:
        """Flat [xi, vi, xo, vo] state vector (length 8)."""
        return np.concatenate([self.inner.position, self.inner.velocity,
                               self.outer.position, self.outer.velocity])

    @staticmethod
    def from_vector(y: np.ndarray) -> "BearingState":
        y = np.asarray(y, dtype=float)
        return BearingState(RigidBody2D(y[0:2].copy(), y[2:4].copy()),
                            RigidBody2D(y[4:6].copy(), y[6:8].copy()))


def _from_dict(cls, data: dict, context: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown {context} keys: {', '.join(unknown)}")
    kwargs = dict(data)
    if "direction" in kwargs:
        kwargs["direction"] = tuple(kwargs["direction"])
    obj = cls(**kwargs)
    if hasattr(obj, "validate"):
        obj.validate()
    return obj


def bearing_config_from_dict(data: dict) -> BearingConfig:
    return _from_dict(BearingConfig, data, "bearing config")


def load_schedule_from_dict(data: dict) -> LoadSchedule:
    return _from_dict(LoadSchedule, data, "load schedule")


def sim_params_from_dict(data: dict) -> SimParams:
    return _from_dict(SimParams, data, "sim params")


def load_config_file(path) -> dict:
    """Read a JSON configuration document, rejecting unknown keys per section."""
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    return raw
