import math

import numpy as np
import pytest

from bearnet.contact import contact_constant
from bearnet.core import (BearingConfig, BearingState, LoadSchedule,
                          RigidBody2D, SimParams, derived_geometry)
from bearnet.simulator import (EquilibriumError, ModelValidityError,
                               SimulationDivergedError, assemble_forces,
                               external_load, rk4_step, roller_kinematics,
                               simulate, static_equilibrium)

CFG = BearingConfig(n_rollers=15)
GEOM = derived_geometry(CFG)
LAW = contact_constant(CFG.roller_length)


def state_with_inner_at(y_mm: float) -> BearingState:
    s = BearingState.zero()
    s.inner.position = np.array([0.0, y_mm / 1000.0])
    return s


class TestRollerKinematics:
    def test_undeformed_state(self):
        centers, deflection, units = roller_kinematics(BearingState.zero(), GEOM)
        assert deflection == pytest.approx(np.zeros(15), abs=1e-15)
        radii = np.linalg.norm(centers, axis=1)
        assert radii == pytest.approx(np.full(15, 65.5 / 2.0), rel=1e-12)

    def test_bottom_roller_compressed_by_downward_inner_shift(self):
        _, deflection, _ = roller_kinematics(state_with_inner_at(-0.04), GEOM)
        assert deflection[0] == pytest.approx(0.04, rel=1e-9)

    def test_top_roller_unloaded_by_downward_inner_shift(self):
        _, deflection, _ = roller_kinematics(state_with_inner_at(-0.04), GEOM)
        # top region rollers see a gap (negative interference)
        assert deflection[8] < 0

    def test_clearance_reduces_interference(self):
        _, deflection, _ = roller_kinematics(state_with_inner_at(-0.04), GEOM,
                                             radial_clearance=0.02)
        assert deflection[0] == pytest.approx(0.03, rel=1e-9)

    def test_bottoming_out_rejected(self):
        with pytest.raises(ModelValidityError):
            roller_kinematics(state_with_inner_at(-6.0), GEOM)


class TestAssembleForces:
    def test_undeformed_zero_everything(self):
        ni, no, rollers = assemble_forces(BearingState.zero(), np.zeros(2),
                                          CFG, GEOM, LAW)
        assert ni == pytest.approx(np.zeros(2), abs=1e-15)
        assert no == pytest.approx(np.zeros(2), abs=1e-15)
        assert all(rc.load_magnitude == 0.0 for rc in rollers)

    def test_action_reaction_is_exact(self):
        state = static_equilibrium(CFG, np.array([0.0, -9000.0]))
        state.inner.velocity = np.array([0.1, -0.2])
        _, _, rollers = assemble_forces(state, np.array([0.0, -9000.0]),
                                        CFG, GEOM, LAW)
        for rc in rollers:
            assert np.array_equal(rc.q_inner, -rc.q_outer)
            assert rc.load_magnitude == pytest.approx(
                np.linalg.norm(rc.q_inner), rel=1e-15)
            if rc.deflection_total <= 0:
                assert rc.load_magnitude == 0.0

    def test_static_solution_balances(self):
        external = np.array([0.0, -13000.0])
        state = static_equilibrium(CFG, external)
        ni, no, _ = assemble_forces(state, external, CFG, GEOM, LAW)
        assert np.linalg.norm(ni) < 1e-6
        assert np.linalg.norm(no) < 1e-6


class TestExternalLoad:
    def test_schedule_phases(self):
        sched = LoadSchedule(base_load=13000.0)
        assert external_load(0, sched) == pytest.approx([0.0, -13000.0])
        assert external_load(2499, sched) == pytest.approx([0.0, -13000.0])
        assert external_load(2500, sched) == pytest.approx([0.0, -26000.0])
        assert external_load(4999, sched) == pytest.approx([0.0, -26000.0])
        assert external_load(5000, sched) == pytest.approx([0.0, -13000.0])

    def test_negative_step_rejected(self):
        with pytest.raises(ValueError):
            external_load(-1, LoadSchedule())


def linear_subproblem_config() -> BearingConfig:
    # Huge diametral clearance keeps every contact open, reducing the inner
    # ring to a linear spring-damper-mass system.
    return BearingConfig(n_rollers=15, radial_clearance=20.0)


def analytic_overdamped(m, c, k, x0, t):
    # roots of m s^2 + c s + k = 0, distinct real
    disc = math.sqrt(c * c - 4 * m * k)
    s1 = (-c + disc) / (2 * m)
    s2 = (-c - disc) / (2 * m)
    a = x0 * s2 / (s2 - s1)
    b = x0 - a
    return a * math.exp(s1 * t) + b * math.exp(s2 * t)


class TestRk4:
    def test_zero_state_is_fixed_point(self):
        sched = LoadSchedule(base_load=1.0, double_at_step=10**6,
                             restore_at_step=2 * 10**6)
        # zero external approximated by pointing the (tiny) load at a step
        # far in the future is not possible; use the linear config with the
        # inner ring at rest instead
        cfg = linear_subproblem_config()
        geom = derived_geometry(cfg)
        state = BearingState.zero()
        out = rk4_step(state, 0, 1e-5, LoadSchedule(base_load=1e-12,
                                                    double_at_step=1,
                                                    restore_at_step=2),
                       cfg, geom, LAW)
        assert np.allclose(out.as_vector()[[0, 1, 2, 3]], 0.0, atol=1e-20)

    def test_convergence_order_on_linear_subproblem(self):
        cfg = linear_subproblem_config()
        m, c, k = cfg.inner_ring_mass, cfg.inner_damping, cfg.ground_spring_stiffness
        x0 = 1e-3
        t_end = 2.0e-4
        sched = LoadSchedule(base_load=1e-9, double_at_step=10**9,
                             restore_at_step=2 * 10**9)
        errors = []
        dts = [4e-6, 2e-6, 1e-6]
        for dt in dts:
            n = round(t_end / dt)
            init = BearingState.zero()
            init.inner.position = np.array([0.0, x0])
            traj = simulate(cfg, sched, SimParams(dt=dt, n_steps=n,
                                                  record_stride=n), init)
            y_num = traj.records[-1].state.inner.position[1]
            y_ref = analytic_overdamped(m, c, k, x0, t_end)
            errors.append(abs(y_num - y_ref))
        rates = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
        for rate in rates:
            assert 3.8 <= rate <= 4.2

    def test_divergence_guard(self):
        # dt far beyond the stability limit of the linear subsystem blows up
        cfg = BearingConfig(n_rollers=15, radial_clearance=1e9)
        init = BearingState.zero()
        init.inner.position = np.array([0.0, 1e-3])
        with pytest.raises(SimulationDivergedError, match="step"):
            simulate(cfg, LoadSchedule(base_load=1.0),
                     SimParams(dt=5e-3, n_steps=200), init)

    def test_overclosure_aborts(self):
        # unstable dt with contacts engaged hits the validity check instead
        with pytest.raises(ModelValidityError):
            simulate(CFG, LoadSchedule(base_load=13000.0),
                     SimParams(dt=5e-3, n_steps=200))


class TestSimulate:
    def test_zero_steps_yields_initial_record_only(self):
        traj = simulate(CFG, LoadSchedule(base_load=5000.0),
                        SimParams(n_steps=0))
        assert len(traj.records) == 1
        assert traj.records[0].step == 0
        assert traj.records[0].state.inner.position == pytest.approx([0, 0])

    def test_record_stride(self):
        traj = simulate(CFG, LoadSchedule(base_load=5000.0),
                        SimParams(n_steps=100, record_stride=25))
        assert [r.step for r in traj.records] == [0, 25, 50, 75, 100]

    def test_steady_state_balance_and_load_zone(self):
        traj = simulate(CFG, LoadSchedule(base_load=13000.0),
                        SimParams(n_steps=2400))
        rec = traj.records[-1]
        q_sum = np.sum([rc.q_outer for rc in rec.rollers], axis=0)
        assert abs(q_sum[1] - 13000.0) / 13000.0 < 0.005
        # lower half-plane rollers carry ~no load at steady state
        for rc in rec.rollers:
            if math.sin(rc.angle) < -0.1:
                assert rc.load_magnitude < 1e-6 * 13000.0

    def test_action_reaction_every_recorded_step(self):
        traj = simulate(CFG, LoadSchedule(base_load=9000.0),
                        SimParams(n_steps=200, record_stride=50))
        for rec in traj.records:
            total = np.sum([rc.q_inner + rc.q_outer for rc in rec.rollers], axis=0)
            assert total == pytest.approx(np.zeros(2), abs=1e-12)

    def test_mirror_symmetry(self):
        traj = simulate(CFG, LoadSchedule(base_load=13000.0),
                        SimParams(n_steps=500))
        for rec in traj.records:
            assert abs(rec.state.inner.position[0]) < 1e-9
            assert abs(rec.state.outer.position[0]) < 1e-9

    def test_bit_identical_repetition(self):
        sched = LoadSchedule(base_load=7000.0)
        params = SimParams(n_steps=300)
        t1 = simulate(CFG, sched, params)
        t2 = simulate(CFG, sched, params)
        for r1, r2 in zip(t1.records, t2.records):
            assert np.array_equal(r1.state.as_vector(), r2.state.as_vector())
            assert np.array_equal(r1.net_force_inner, r2.net_force_inner)


class TestStaticEquilibrium:
    def test_unloaded(self):
        state = static_equilibrium(CFG, np.zeros(2))
        assert state.as_vector() == pytest.approx(np.zeros(8), abs=0)

    def test_spring_carries_full_load(self):
        state = static_equilibrium(CFG, np.array([0.0, -13000.0]))
        assert state.inner.position[1] == pytest.approx(-13000.0 / 5e6, rel=1e-6)

    def test_symmetric_layout_has_zero_x(self):
        state = static_equilibrium(CFG, np.array([0.0, -13000.0]))
        assert abs(state.inner.position[0]) < 1e-12
        assert abs(state.outer.position[0]) < 1e-12

    def test_settled_dynamics_match_oracle(self):
        external = np.array([0.0, -13000.0])
        traj = simulate(CFG, LoadSchedule(base_load=13000.0),
                        SimParams(n_steps=2400))
        eq = static_equilibrium(CFG, external)
        sim_pos = np.concatenate([traj.records[-1].state.inner.position,
                                  traj.records[-1].state.outer.position])
        eq_pos = np.concatenate([eq.inner.position, eq.outer.position])
        assert np.all(np.abs(sim_pos - eq_pos)
                      <= np.maximum(0.01 * np.abs(eq_pos), 1e-9))
