"""Tangent matrices, nullspace projection, eigenvalues, and decay times."""

import math

import numpy as np
import pytest

from slide import (
    DUFFING,
    LINEAR_OSCILLATOR,
    complex_eigenvalues,
    decay_time,
    gen_accel_trajectory,
    integrate_dae,
    integrate_ode,
    linearize,
    make_oscillator,
    make_slider_crank_lumped,
    make_two_mass_constrained,
    nullspace_basis,
    project_system,
    tangent_matrices,
    trajectory_mean_decay,
)
from slide.dynamics import DriveSignal, Trajectory
from slide.errors import EigenError
from slide.linearization import modal_response, sort_eigenvalues


def constant_trajectory(q, qdot, n=5, h=0.01, n_u=1):
    q = np.tile(np.asarray(q, dtype=float), (n, 1))
    qd = np.tile(np.asarray(qdot, dtype=float), (n, 1))
    return Trajectory(h=h, q=q, qdot=qd, u=np.zeros((n, n_u)),
                      y=q.copy(), system="synthetic")


class TestTangentMatrices:
    def test_linear_oscillator_exact(self):
        model = make_oscillator(LINEAR_OSCILLATOR)
        k, d = tangent_matrices(model, [0.0], [0.0], [0.0])
        assert abs(k[0, 0] - 1600.0) < 1e-6
        assert abs(d[0, 0] - 8.0) < 1e-6

    def test_duffing_slope_vanishes_at_origin(self):
        model = make_oscillator(DUFFING)
        k, _ = tangent_matrices(model, [0.0], [0.0], [0.0])
        assert k[0, 0] == pytest.approx(1600.0, abs=1e-5)

    def test_duffing_hardened_stiffness(self):
        # d(kx + alpha k x^3)/dx at x = 1: k (1 + 3 alpha) = 4000
        model = make_oscillator(DUFFING)
        k, _ = tangent_matrices(model, [1.0], [0.0], [0.0])
        assert k[0, 0] == pytest.approx(4000.0, abs=1e-4)


class TestNullspaceBasis:
    def test_two_mass_jacobian(self):
        basis = nullspace_basis(np.array([[1.0, -1.0]]))
        assert basis.shape == (1, 2)
        assert np.allclose(np.abs(basis), 1.0 / math.sqrt(2.0))
        assert basis[0, 0] == pytest.approx(basis[0, 1])

    def test_zero_matrix_gives_identity(self):
        assert np.array_equal(nullspace_basis(np.zeros((2, 3))), np.eye(3))

    def test_full_rank_gives_empty_basis(self):
        basis = nullspace_basis(np.eye(4))
        assert basis.shape == (0, 4)
        m_bar, k_bar, d_bar = project_system(np.eye(4), np.eye(4), np.eye(4), basis)
        assert m_bar.shape == (0, 0)
        assert complex_eigenvalues(m_bar, k_bar, d_bar).shape == (0,)

    def test_orthonormal_rows_annihilate_jacobian(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            jac = rng.standard_normal((3, 6))
            basis = nullspace_basis(jac)
            assert np.abs(jac @ basis.T).max() <= 1e-10
            assert np.allclose(basis @ basis.T, np.eye(basis.shape[0]), atol=1e-10)


class TestProjectSystem:
    def test_two_mass_projection_values(self):
        m, k, d = (np.eye(2), 1600.0 * np.eye(2), 8.0 * np.eye(2))
        basis = nullspace_basis(np.array([[1.0, -1.0]]))
        m_bar, k_bar, d_bar = project_system(m, k, d, basis)
        assert m_bar[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert k_bar[0, 0] == pytest.approx(1600.0, abs=1e-9)
        assert d_bar[0, 0] == pytest.approx(8.0, abs=1e-12)

    def test_identity_basis_is_identity_map(self):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((3, 3))
        out = project_system(m, m, m, np.eye(3))
        for mat in out:
            assert np.allclose(mat, m)

    def test_projection_preserves_spd(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((4, 4))
        spd = a @ a.T + 4.0 * np.eye(4)
        basis = nullspace_basis(rng.standard_normal((2, 4)))
        m_bar, _, _ = project_system(spd, spd, spd, basis)
        assert np.all(np.linalg.eigvalsh(m_bar) > 0)


class TestComplexEigenvalues:
    def test_single_oscillator(self):
        vals = complex_eigenvalues([[1.0]], [[1600.0]], [[8.0]])
        assert np.allclose(sorted(vals.imag), [-math.sqrt(1584.0), math.sqrt(1584.0)],
                           atol=1e-9)
        assert np.allclose(vals.real, -4.0, atol=1e-9)

    def test_undamped_is_purely_imaginary(self):
        vals = complex_eigenvalues([[1.0]], [[1600.0]], [[0.0]])
        assert np.abs(vals.real).max() < 1e-9
        assert np.allclose(np.abs(vals.imag), 40.0, atol=1e-9)

    def test_overdamped_real_pair(self):
        vals = complex_eigenvalues([[1.0]], [[1.0]], [[4.0]])
        expected = sorted([-2.0 + math.sqrt(3.0), -2.0 - math.sqrt(3.0)])
        assert np.abs(vals.imag).max() < 1e-12
        assert np.allclose(sorted(vals.real), expected, atol=1e-9)

    def test_singular_mass_raises(self):
        with pytest.raises(EigenError):
            complex_eigenvalues(np.zeros((1, 1)), [[1.0]], [[1.0]])

    def test_deterministic_ordering(self):
        vals = complex_eigenvalues(np.eye(2), np.diag([1600.0, 2500.0]),
                                   np.diag([8.0, 6.0]))
        resorted = sort_eigenvalues(vals[::-1])
        assert np.array_equal(vals, resorted)
        assert abs(vals[0].real) <= abs(vals[-1].real)


class TestDecayTime:
    def test_reference_oscillator_value(self):
        # omega0 = 40, D = 0.1: Re(v) = -4, t_d = ln(0.01)/(-4)
        vals = complex_eigenvalues([[1.0]], [[1600.0]], [[8.0]])
        t_d = decay_time(vals[0], 0.01)
        assert t_d == pytest.approx(1.15, rel=5e-3)
        assert t_d == pytest.approx(math.log(0.01) / -4.0, rel=1e-12)

    def test_amplitude_near_one_gives_short_decay(self):
        assert decay_time(-4.0 + 10j, 0.999999) < 1e-6

    def test_direct_value(self):
        assert decay_time(-0.5, 0.01) == pytest.approx(9.2103, abs=5e-5)

    def test_undamped_mode_returns_infinity(self):
        assert decay_time(0.0 + 40j, 0.01) == math.inf
        assert decay_time(2.0, 0.01) == math.inf

    def test_amplitude_domain_checked(self):
        with pytest.raises(ValueError):
            decay_time(-1.0, 1.5)
        with pytest.raises(ValueError):
            decay_time(-1.0, 0.0)


class TestTrajectoryMeanDecay:
    def test_constant_state_linear_oscillator(self):
        model = make_oscillator(LINEAR_OSCILLATOR)
        traj = constant_trajectory([0.0], [0.0])
        rep = trajectory_mean_decay(model, traj, a_rel=0.01)
        assert rep.t_d_mean == pytest.approx(1.1513, abs=1e-3)
        assert rep.t_d_max == pytest.approx(rep.t_d_mean)

    def test_duffing_decay_is_state_independent(self):
        model = make_oscillator(DUFFING)
        drive = DriveSignal("const", np.full((65, 1), 700.0))
        traj = integrate_ode(model, drive, 0.025, 64)
        rep = trajectory_mean_decay(model, traj, a_rel=0.01, stride=4)
        assert rep.t_d_mean == pytest.approx(math.log(0.01) / -4.0, rel=1e-6)
        assert rep.t_d_max == pytest.approx(rep.t_d_mean, rel=1e-6)

    def test_slider_crank_statistics(self):
        h = 0.03125
        drive = gen_accel_trajectory(48, h, seed=2)
        model = make_slider_crank_lumped(phi0=float(drive.u[0, 0]))
        traj = integrate_dae(model, drive, h, 48, substeps=32)
        rep = trajectory_mean_decay(model, traj, a_rel=0.01, stride=8)
        assert math.isfinite(rep.t_d_mean)
        assert rep.t_d_max >= rep.t_d_mean


class TestSpectralInvariants:
    def test_basis_invariance_under_orthogonal_recombination(self):
        # strict 1e-8 on the two-mass fixture; the slider-crank's rigid-body
        # zeros carry eigensolver noise of ~1e-8 relative to its |v| ~ 50
        rng = np.random.default_rng(3)
        for model, atol in ((make_two_mass_constrained(), 1e-8),
                            (make_slider_crank_lumped(input_mode="torque"), 5e-7)):
            base = linearize(model)
            mass = np.asarray(model.mass(base.q_lin), dtype=float)
            n_f = base.basis.shape[0]
            for _ in range(20):
                q, _ = np.linalg.qr(rng.standard_normal((n_f, n_f)))
                rotated = q @ base.basis
                m_bar, k_bar, d_bar = project_system(mass, base.k_mat,
                                                     base.d_mat, rotated)
                vals = complex_eigenvalues(m_bar, k_bar, d_bar)
                assert np.allclose(vals, base.eigenvalues, atol=atol)

    def test_spectrum_closed_under_conjugation(self):
        rep = linearize(make_slider_crank_lumped(input_mode="torque"))
        conj = sort_eigenvalues(np.conj(rep.eigenvalues))
        assert np.allclose(conj, rep.eigenvalues, atol=1e-10)

    def test_two_mass_oracle_equivalence(self):
        rep = linearize(make_two_mass_constrained())
        analytic = sort_eigenvalues(np.roots([1.0, 8.0, 1600.0]).astype(complex))
        assert np.allclose(rep.eigenvalues, analytic, atol=1e-8)


class TestFreeDecayOracle:
    def test_envelope_crossing_matches_decay_time(self):
        model = make_oscillator(LINEAR_OSCILLATOR, x0=1.0)
        h = 0.005
        n = 400
        traj = integrate_ode(model, DriveSignal("const", np.zeros((n + 1, 1))), h, n)
        x = np.abs(traj.q[:, 0])
        above = np.nonzero(x >= 0.01)[0]
        t_cross = traj.times[above[-1] + 1]
        t_d = decay_time(complex_eigenvalues([[1.0]], [[1600.0]], [[8.0]])[0], 0.01)
        period = 2.0 * math.pi / math.sqrt(1584.0)
        assert abs(t_cross - t_d) <= period

    def test_modal_reconstruction_matches_simulation(self):
        model = make_oscillator(LINEAR_OSCILLATOR, x0=1.0)
        h = 0.002
        n = 250
        traj = integrate_ode(model, DriveSignal("const", np.zeros((n + 1, 1))), h, n)
        recon = modal_response([[1.0]], [[8.0]], [[1600.0]], [1.0], [0.0], traj.times)
        assert np.abs(recon[:, 0] - traj.q[:, 0]).max() <= 1e-6
