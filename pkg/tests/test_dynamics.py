"""Integrators, PD control, and drive-signal generators."""

import math

import numpy as np
import pytest

from slide import (
    DriveSignal,
    SystemModel,
    gen_accel_trajectory,
    gen_ptp,
    gen_random_step_force,
    integrate_dae,
    integrate_ode,
    make_oscillator,
    make_slider_crank_lumped,
    make_two_mass_constrained,
    pd_torque,
)
from slide.dynamics import trajectory_from_csv, trajectory_to_csv
from slide.errors import ConfigError, IntegrationDivergedError
from slide.models import LINEAR_OSCILLATOR


def zero_drive(n_steps, n_u=1):
    return DriveSignal("const", np.zeros((n_steps + 1, n_u)))


def analytic_underdamped(t):
    # m=1, k=1600, d=8, x0=1, v0=0: roots -4 +/- i*sqrt(1584)
    wd = math.sqrt(1584.0)
    return np.exp(-4.0 * t) * (np.cos(wd * t) + (4.0 / wd) * np.sin(wd * t))


class TestIntegrateOde:
    def test_equilibrium_rest_stays_zero(self):
        model = make_oscillator(LINEAR_OSCILLATOR)
        traj = integrate_ode(model, zero_drive(200), 1e-3, 200)
        assert np.all(traj.q == 0.0)
        assert np.all(traj.qdot == 0.0)

    def test_matches_analytic_underdamped_response(self):
        model = make_oscillator(LINEAR_OSCILLATOR, x0=1.0)
        traj = integrate_ode(model, zero_drive(1000), 1e-3, 1000)
        ref = analytic_underdamped(traj.times)
        assert np.abs(traj.q[:, 0] - ref).max() <= 1e-6

    def test_duffing_cubic_steady_state(self):
        # 1600*x + 0.5*1600*x^3 = 2400 has the exact root x = 1
        from slide.models import DUFFING

        model = make_oscillator(DUFFING)
        drive = DriveSignal("const", np.full((2001, 1), 2400.0))
        traj = integrate_ode(model, drive, 0.0025, 2000)
        assert traj.q[-1, 0] == pytest.approx(1.0, abs=1e-6)

    def test_requires_unconstrained_model(self):
        model = make_two_mass_constrained()
        with pytest.raises(ConfigError):
            integrate_ode(model, zero_drive(10), 1e-3, 10)

    def test_short_drive_rejected(self):
        model = make_oscillator(LINEAR_OSCILLATOR)
        with pytest.raises(ConfigError):
            integrate_ode(model, zero_drive(5), 1e-3, 10)

    def test_divergence_reports_step_index(self):
        runaway = SystemModel(
            name="runaway", n_q=1, n_a=0, n_u=1, n_y=1,
            mass=lambda q: np.array([[1.0]]),
            force=lambda q, qd, u, t: np.array([1e3 * q[0] + 1.0]),
            q0=np.array([1.0]), qdot0=np.array([0.0]),
        )
        with pytest.raises(IntegrationDivergedError) as err:
            integrate_ode(runaway, zero_drive(400), 1.0, 400)
        assert 0 < err.value.step <= 400

    def test_output_recorded_with_current_input(self):
        model = make_oscillator(LINEAR_OSCILLATOR)
        drive = gen_random_step_force((-100.0, 100.0), 16, seed=3)
        traj = integrate_ode(model, drive, 1e-2, 16)
        assert np.array_equal(traj.u, drive.u[:17])
        assert np.array_equal(traj.y[:, 0], traj.q[:, 0])

    def test_step_halving_gains_at_least_order_three(self):
        errors = []
        for h in (0.02, 0.01, 0.005):
            model = make_oscillator(LINEAR_OSCILLATOR, x0=1.0)
            n = round(0.5 / h)
            traj = integrate_ode(model, zero_drive(n), h, n, substeps=1)
            errors.append(abs(traj.q[-1, 0] - analytic_underdamped(np.array([0.5]))[0]))
        assert errors[0] / errors[1] >= 8.0
        assert errors[1] / errors[2] >= 8.0

    def test_energy_dissipates_without_forcing(self):
        model = make_oscillator(LINEAR_OSCILLATOR, x0=0.8, v0=-2.0)
        traj = integrate_ode(model, zero_drive(600), 2e-3, 600)
        energy = np.array([model.energy(q, qd) for q, qd in zip(traj.q, traj.qdot)])
        assert np.all(np.diff(energy) <= 1e-9 * energy[0])

    def test_deterministic_repeatability(self):
        def run():
            model = make_oscillator(LINEAR_OSCILLATOR, x0=0.1)
            drive = gen_random_step_force((-2000.0, 2000.0), 64, seed=11)
            return integrate_ode(model, drive, 0.015625, 64)

        a, b = run(), run()
        assert np.array_equal(a.q, b.q)
        assert np.array_equal(a.qdot, b.qdot)
        assert np.array_equal(a.y, b.y)


class TestIntegrateDae:
    def test_two_mass_symmetry_preserved(self):
        model = make_two_mass_constrained(x0=(0.1, 0.1))
        traj = integrate_dae(model, zero_drive(400), 0.01, 400)
        assert np.abs(traj.q[:, 0] - traj.q[:, 1]).max() <= 1e-9

    def test_slider_crank_rest_keeps_constraints(self):
        model = make_slider_crank_lumped(input_mode="torque")
        traj = integrate_dae(model, zero_drive(100), 0.03125, 100, substeps=32)
        worst = max(np.abs(model.constraint(q, 0.0)).max() for q in traj.q)
        assert worst <= 1e-8

    def test_pd_drives_crank_to_target(self):
        # slow PD pole at P/D = 5 1/s; settle within 2% after ~5 time constants
        model = make_slider_crank_lumped(phi0=0.0)
        target = math.pi / 4
        n = 96
        drive = DriveSignal("const", np.tile([target, 0.0], (n + 1, 1)))
        traj = integrate_dae(model, drive, 0.03125, n, substeps=32)
        settled = traj.q[traj.times >= 1.0, 0]
        assert np.all(np.abs(settled - target) <= 0.02 * target)

    def test_constraint_drift_bounded_on_random_run(self):
        h = 0.03125
        drive = gen_accel_trajectory(128, h, seed=4)
        model = make_slider_crank_lumped(phi0=float(drive.u[0, 0]))
        traj = integrate_dae(model, drive, h, 128, substeps=32)
        worst = max(np.abs(model.constraint(q, 0.0)).max() for q in traj.q)
        assert worst <= 1e-6

    def test_inconsistent_initial_state_rejected(self):
        model = make_two_mass_constrained(x0=(0.1, 0.3))
        with pytest.raises(ConfigError):
            integrate_dae(model, zero_drive(10), 0.01, 10)

    def test_redundant_constraints_raise_degeneracy(self):
        from slide.errors import ConstraintDegeneracyError

        base = make_two_mass_constrained()
        degenerate = SystemModel(
            name="degenerate", n_q=2, n_a=2, n_u=1, n_y=2,
            mass=base.mass, force=base.force,
            q0=base.q0, qdot0=base.qdot0,
            constraint=lambda q, t: np.array([q[0] - q[1], q[0] - q[1]]),
            constraint_jacobian=lambda q, t: np.array([[1.0, -1.0], [1.0, -1.0]]),
        )
        with pytest.raises(ConstraintDegeneracyError):
            integrate_dae(degenerate, zero_drive(5), 0.01, 5)

    def test_finite_difference_convective_matches_analytic(self):
        h = 0.03125
        drive = gen_accel_trajectory(32, h, seed=7)
        analytic = make_slider_crank_lumped(phi0=float(drive.u[0, 0]))
        blackbox = make_slider_crank_lumped(phi0=float(drive.u[0, 0]))
        blackbox.constraint_convective = None
        ta = integrate_dae(analytic, drive, h, 32, substeps=16)
        tb = integrate_dae(blackbox, drive, h, 32, substeps=16)
        assert np.abs(ta.q - tb.q).max() <= 1e-8


class TestPdTorque:
    def test_zero_error_gives_zero(self):
        assert pd_torque((0.3, 1.0), (0.3, 1.0), (100.0, 20.0)) == 0.0

    def test_proportional_term(self):
        assert pd_torque((0.1, 0.0), (0.0, 0.0), (100.0, 20.0)) == pytest.approx(10.0)

    def test_derivative_term(self):
        assert pd_torque((0.0, -0.5), (0.0, 0.0), (0.0, 20.0)) == pytest.approx(-10.0)


class TestRandomStepForce:
    def test_samples_stay_in_bounds(self):
        drive = gen_random_step_force((-2000.0, 2000.0), 500, seed=0)
        assert drive.u.min() >= -2000.0
        assert drive.u.max() <= 2000.0
        assert drive.u.shape == (501, 1)

    def test_degenerate_bounds_give_zero_signal(self):
        drive = gen_random_step_force((0.0, 0.0), 100, seed=5)
        assert np.all(drive.u == 0.0)

    def test_same_seed_same_signal(self):
        a = gen_random_step_force((-1.0, 1.0), 64, seed=42)
        b = gen_random_step_force((-1.0, 1.0), 64, seed=42)
        assert np.array_equal(a.u, b.u)

    def test_bad_bounds_rejected(self):
        with pytest.raises(ConfigError):
            gen_random_step_force((1.0, -1.0), 10, seed=0)


class TestAccelTrajectory:
    def test_velocity_and_acceleration_limits(self):
        h = 0.03125
        for seed in range(5):
            drive = gen_accel_trajectory(400, h, seed)
            omega = drive.u[:, 1]
            assert np.abs(omega).max() <= 8.0 + 1e-12
            accel = np.diff(omega) / h
            assert np.abs(accel).max() <= 20.0 + 1e-9

    def test_all_zero_acceleration_keeps_omega_constant(self):
        drive = gen_accel_trajectory(200, 0.03125, seed=1, p_zero=1.0)
        assert np.all(drive.u[:, 1] == drive.u[0, 1])

    def test_trapezoidal_reintegration_recovers_angle(self):
        h = 0.03125
        drive = gen_accel_trajectory(300, h, seed=9)
        phi, omega = drive.u[:, 0], drive.u[:, 1]
        rebuilt = np.empty_like(phi)
        rebuilt[0] = phi[0]
        for i in range(len(phi) - 1):
            rebuilt[i + 1] = rebuilt[i] + 0.5 * (omega[i] + omega[i + 1]) * h
        assert np.abs(rebuilt - phi).max() <= 1e-10

    def test_initial_angle_in_range(self):
        angles = [gen_accel_trajectory(10, 0.01, seed)
                  .u[0, 0] for seed in range(20)]
        assert all(-math.pi <= a <= math.pi for a in angles)

    def test_bad_limits_rejected(self):
        with pytest.raises(ConfigError):
            gen_accel_trajectory(10, 0.01, 0, omega_max=-1.0)


class TestPtp:
    def test_identical_waypoints_give_constant_signal(self):
        drive = gen_ptp([0.7, 0.7, 0.7], [1.0, 1.0], 100)
        assert np.all(drive.u[:, 0] == 0.7)
        assert np.all(drive.u[:, 1] == 0.0)

    def test_unit_move_profile(self):
        drive = gen_ptp([0.0, 1.0], [1.0], 100)
        angles, vels = drive.u[:, 0], drive.u[:, 1]
        assert angles[50] == pytest.approx(0.5, abs=1e-12)
        assert vels.max() == pytest.approx(2.0, abs=1e-12)
        assert np.argmax(vels) == 50

    def test_waypoints_hit_with_zero_velocity(self):
        drive = gen_ptp([0.2, -0.4, 0.9], [0.5, 1.5], 200)
        angles, vels = drive.u[:, 0], drive.u[:, 1]
        # waypoint times 0, 0.5, 2.0 on a 2.0 s grid of 200 steps
        assert angles[0] == pytest.approx(0.2)
        assert angles[50] == pytest.approx(-0.4, abs=1e-12)
        assert angles[200] == pytest.approx(0.9, abs=1e-12)
        for idx in (0, 50, 200):
            assert vels[idx] == pytest.approx(0.0, abs=1e-12)

    def test_multijoint_waypoints(self):
        drive = gen_ptp([[0.0, 1.0], [1.0, 0.0]], [2.0], 10)
        assert drive.u.shape == (11, 4)
        assert drive.u[-1, 0] == pytest.approx(1.0)
        assert drive.u[-1, 1] == pytest.approx(0.0)

    def test_waypoint_segment_mismatch(self):
        with pytest.raises(ConfigError):
            gen_ptp([0.0, 1.0, 2.0], [1.0], 10)


class TestTrajectoryCsv:
    def test_round_trip(self, tmp_path):
        model = make_oscillator(LINEAR_OSCILLATOR, x0=0.3)
        drive = gen_random_step_force((-10.0, 10.0), 32, seed=2)
        traj = integrate_ode(model, drive, 0.01, 32)
        path = tmp_path / "traj.csv"
        trajectory_to_csv(traj, path)
        back = trajectory_from_csv(path)
        assert back.h == traj.h
        assert np.array_equal(back.q, traj.q)
        assert np.array_equal(back.qdot, traj.qdot)
        assert np.array_equal(back.u, traj.u)
        assert np.array_equal(back.y, traj.y)

    def test_header_layout(self, tmp_path):
        model = make_slider_crank_lumped()
        drive = DriveSignal("const", np.zeros((3, 2)))
        traj = integrate_dae(model, drive, 0.01, 2, substeps=4)
        path = tmp_path / "sc.csv"
        trajectory_to_csv(traj, path)
        header = path.read_text().splitlines()[0]
        assert header.startswith("t,q0,")
        assert "qdot0" in header and "u0" in header and "y1" in header
