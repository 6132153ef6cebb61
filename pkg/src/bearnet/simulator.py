"""2D rigid-body dynamics of the bearing under a step load schedule.

Inner and outer ring translate in the plane; rollers are massless and sit
midway between the raceway surfaces, so each roller's total interference
splits equally over its two contacts.  Forces on the rings are assembled
from the unilateral contact law, the inner-ring ground springs, the
ground dampers, and the external load on the outer ring; classical RK4
integrates the resulting 8-dimensional state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contact import ContactLaw, contact_constant, contact_deflection, contact_force
from .core import (BearingConfig, BearingState, DerivedGeometry, LoadSchedule,
                   SimParams, derived_geometry)

FORMAT_VERSION = 1

# Divergence guard thresholds, SI.
_MAX_POSITION = 1.0
_MAX_VELOCITY = 1.0e4


class SimulationDivergedError(RuntimeError):
    """Integrator state left the trusted envelope; try a smaller dt."""


class ModelValidityError(RuntimeError):
    """A roller deflection reached the roller radius (model breakdown)."""


class EquilibriumError(RuntimeError):
    """Static equilibrium solve failed to converge."""


@dataclass
class RollerContact:
    """Per-roller contact snapshot: geometry plus forces on both rings."""

    index: int
    angle: float            # radians, fixed
    center: np.ndarray      # mm
    deflection_total: float  # mm, negative = gap
    q_inner: np.ndarray     # N, force on inner ring from this roller
    q_outer: np.ndarray     # N, force on outer ring from this roller
    load_magnitude: float   # N


@dataclass
class StepRecord:
    step: int
    time: float
    state: BearingState
    external_force: np.ndarray
    rollers: list[RollerContact]
    net_force_inner: np.ndarray
    net_force_outer: np.ndarray


@dataclass
class Trajectory:
    config: BearingConfig
    schedule: LoadSchedule
    params: SimParams
    records: list[StepRecord]
    format_version: int = FORMAT_VERSION


def external_load(step: int, schedule: LoadSchedule) -> np.ndarray:
    """External force vector (N) applied to the outer ring at a step index."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    magnitude = schedule.base_load
    if schedule.double_at_step <= step < schedule.restore_at_step:
        magnitude = 2.0 * schedule.base_load
    return magnitude * np.asarray(schedule.direction, dtype=float)


def roller_kinematics(state: BearingState, geom: DerivedGeometry,
                      radial_clearance: float = 0.0):
    """Roller centers (mm), total interferences (mm) and radial unit vectors.

    The roller center is the midpoint of the two raceway surface points on
    its fixed radial ray; the interference is the ring approach projected
    on that ray minus half the diametral clearance.
    """
    units = geom.radial_units
    oi = state.inner.position * 1000.0
    oo = state.outer.position * 1000.0
    rel = oi - oo
    deflection = units @ rel - radial_clearance / 2.0
    worst = float(np.max(deflection))
    if worst >= geom.roller_radius:
        raise ModelValidityError(
            f"roller deflection {worst:.4f} mm reached the roller radius "
            f"{geom.roller_radius} mm; ring overlap is outside model validity")
    pitch_radius = (geom.inner_raceway_radius + geom.outer_raceway_radius) / 2.0
    centers = (oi + oo) / 2.0 + pitch_radius * units
    return centers, deflection, units


def assemble_forces(state: BearingState, external: np.ndarray,
                    config: BearingConfig, geom: DerivedGeometry,
                    law: ContactLaw):
    """Net ring forces (N) and per-roller contact records for a state.

    Each contact of roller k carries the load of half the total
    interference; the roller pushes the inner ring inward (-Q u_k) and the
    outer ring outward (+Q u_k).  The inner ring adds its ground spring and
    damper, the outer its damper and the external load.  No gravity.
    """
    centers, deflection, units = roller_kinematics(
        state, geom, config.radial_clearance)
    q = contact_force(law, deflection / 2.0)
    q_inner = -q[:, None] * units
    q_outer = -q_inner
    k = config.ground_spring_stiffness
    net_inner = (q_inner.sum(axis=0)
                 - k * state.inner.position
                 - config.inner_damping * state.inner.velocity)
    net_outer = (q_outer.sum(axis=0)
                 + np.asarray(external, dtype=float)
                 - config.outer_damping * state.outer.velocity)
    rollers = [RollerContact(index=i, angle=geom.roller_angles[i],
                             center=centers[i], deflection_total=float(deflection[i]),
                             q_inner=q_inner[i], q_outer=q_outer[i],
                             load_magnitude=float(q[i]))
               for i in range(config.n_rollers)]
    return net_inner, net_outer, rollers


def _net_forces_vec(y: np.ndarray, external: np.ndarray,
                    config: BearingConfig, units: np.ndarray,
                    law: ContactLaw, roller_radius: float):
    """Fast path of assemble_forces on a flat [xi, vi, xo, vo] state vector."""
    rel = (y[0:2] - y[4:6]) * 1000.0
    deflection = units @ rel - config.radial_clearance / 2.0
    worst = deflection.max()
    if worst >= roller_radius:
        raise ModelValidityError(
            f"roller deflection {worst:.4f} mm reached the roller radius")
    half = deflection / 2.0
    q = np.where(half > 0.0,
                 law.stiffness_constant * np.abs(half) ** law.exponent, 0.0)
    contact_sum = q @ units  # force on the outer ring from all rollers
    k = config.ground_spring_stiffness
    net_inner = -contact_sum - k * y[0:2] - config.inner_damping * y[2:4]
    net_outer = contact_sum + external - config.outer_damping * y[6:8]
    return net_inner, net_outer


def _derivative(y, external, config, units, law, roller_radius):
    net_inner, net_outer = _net_forces_vec(
        y, external, config, units, law, roller_radius)
    out = np.empty(8)
    out[0:2] = y[2:4]
    out[2:4] = net_inner / config.inner_ring_mass
    out[4:6] = y[6:8]
    out[6:8] = net_outer / config.outer_ring_mass
    return out


def _check_state(y: np.ndarray, dt: float):
    if (not np.all(np.isfinite(y))
            or np.max(np.abs(y[[0, 1, 4, 5]])) > _MAX_POSITION
            or np.max(np.abs(y[[2, 3, 6, 7]])) > _MAX_VELOCITY):
        raise SimulationDivergedError(
            f"integrator state left the stability envelope (dt = {dt}); "
            "try a smaller time step")


def rk4_step(state: BearingState, step: int, dt: float,
             schedule: LoadSchedule, config: BearingConfig,
             geom: DerivedGeometry, law: ContactLaw) -> BearingState:
    """One classical RK4 step; the external load is frozen at its value
    for the given step index."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    external = external_load(step, schedule)
    units = geom.radial_units
    rr = geom.roller_radius
    y = state.as_vector()
    y1 = _rk4_vec(y, dt, external, config, units, law, rr)
    _check_state(y1, dt)
    return BearingState.from_vector(y1)


def _rk4_vec(y, dt, external, config, units, law, roller_radius):
    k1 = _derivative(y, external, config, units, law, roller_radius)
    k2 = _derivative(y + 0.5 * dt * k1, external, config, units, law, roller_radius)
    k3 = _derivative(y + 0.5 * dt * k2, external, config, units, law, roller_radius)
    k4 = _derivative(y + dt * k3, external, config, units, law, roller_radius)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate(config: BearingConfig, schedule: LoadSchedule, params: SimParams,
             initial_state: BearingState | None = None) -> Trajectory:
    """Integrate the step response and record the trajectory.

    Starts from the zero state (unless an initial state is given), runs
    exactly n_steps RK4 steps, and records a StepRecord at every step
    index divisible by record_stride, with forces evaluated at the
    recorded state under that step's external load.
    """
    config.validate()
    schedule.validate()
    params.validate()
    geom = derived_geometry(config)
    law = contact_constant(config.roller_length)
    units = geom.radial_units
    rr = geom.roller_radius
    state = BearingState.zero() if initial_state is None else initial_state.copy()
    y = state.as_vector()
    records: list[StepRecord] = []

    def record(step: int, y: np.ndarray):
        s = BearingState.from_vector(y)
        external = external_load(step, schedule)
        net_inner, net_outer, rollers = assemble_forces(
            s, external, config, geom, law)
        records.append(StepRecord(step=step, time=step * params.dt, state=s,
                                  external_force=external, rollers=rollers,
                                  net_force_inner=net_inner,
                                  net_force_outer=net_outer))

    for step in range(params.n_steps + 1):
        if step % params.record_stride == 0:
            record(step, y)
        if step == params.n_steps:
            break
        external = external_load(step, schedule)
        y = _rk4_vec(y, params.dt, external, config, units, law, rr)
        try:
            _check_state(y, params.dt)
        except SimulationDivergedError as exc:
            raise SimulationDivergedError(f"step {step + 1}: {exc}") from None
    return Trajectory(config=config, schedule=schedule, params=params,
                      records=records)


def static_equilibrium(config: BearingConfig, external: np.ndarray,
                       tol: float = 1.0e-6, max_iter: int = 100) -> BearingState:
    """Ring positions balancing the external load, velocities zero.

    Damped Newton iteration on the 4-vector [o_inner, o_outer] with a
    numerically differenced Jacobian; serves as an independent oracle for
    the settled dynamic solution.
    """
    config.validate()
    external = np.asarray(external, dtype=float)
    geom = derived_geometry(config)
    law = contact_constant(config.roller_length)
    units = geom.radial_units
    rr = geom.roller_radius
    if np.linalg.norm(external) == 0.0:
        return BearingState.zero()

    def residual(x: np.ndarray) -> np.ndarray:
        y = np.zeros(8)
        y[0:2] = x[0:2]
        y[4:6] = x[2:4]
        ni, no = _net_forces_vec(y, external, config, units, law, rr)
        return np.concatenate([ni, no])

    k = config.ground_spring_stiffness
    magnitude = float(np.linalg.norm(external))
    direction = external / magnitude
    # Initial guess: ground spring carries the full load; outer ring offset
    # by the single-roller interference at the full load.
    x = np.empty(4)
    x[0:2] = external / k
    gap = 2.0 * contact_deflection(law, magnitude) / 1000.0
    x[2:4] = x[0:2] + gap * direction

    h = 1.0e-8
    r = residual(x)
    for _ in range(max_iter):
        norm = np.linalg.norm(r)
        if norm < tol:
            return BearingState.from_vector(
                np.concatenate([x[0:2], np.zeros(2), x[2:4], np.zeros(2)]))
        jac = np.empty((4, 4))
        for j in range(4):
            xp = x.copy()
            xp[j] += h
            jac[:, j] = (residual(xp) - r) / h
        try:
            delta = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(jac, -r, rcond=None)[0]
        # Backtracking on the residual norm.
        scale = 1.0
        for _ in range(40):
            x_new = x + scale * delta
            try:
                r_new = residual(x_new)
            except ModelValidityError:
                scale *= 0.5
                continue
            if np.linalg.norm(r_new) < norm:
                x, r = x_new, r_new
                break
            scale *= 0.5
        else:
            raise EquilibriumError(
                f"line search stalled at residual {norm:.3e} N")
    raise EquilibriumError(
        f"no convergence after {max_iter} iterations; last residual "
        f"{np.linalg.norm(r):.3e} N")
