"""Linearized eigenanalysis of (constrained) systems and decay-time estimates.

Pipeline: finite-difference tangent stiffness/damping about a state, SVD
nullspace of the constraint Jacobian, congruence projection of M, K, D onto
the admissible motions, complex eigenvalues of the projected first-order
system, and decay times t_d = ln(A_rel)/Re(v) per mode. A trajectory-level
helper averages the slowest damped mode over sampled states.

Everything here is a pure function of its inputs and safe to call
concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dynamics import SystemModel, Trajectory
from .errors import EigenError, LinearizationError, NoDampedModeError

DEFAULT_S_TOL = 1e-10      # singular values below s_tol * sigma_max count as zero
DEFAULT_RIGID_TOL = 1e-6   # |Re(v)| below this marks a rigid-body mode
DEFAULT_A_REL = 0.01


def tangent_matrices(model: SystemModel, q_lin, qdot_lin, u):
    """Tangent stiffness and damping: K = -df/dq, D = -df/dqdot.

    Central differences with per-component step 1e-6 * (1 + |q_i|); the
    force function is treated as a black box. Mass-gradient and
    multiplier-gradient terms are not included.
    """
    q = np.asarray(q_lin, dtype=float)
    qd = np.asarray(qdot_lin, dtype=float)
    u = np.asarray(u, dtype=float)
    n = q.shape[0]
    k_mat = np.empty((n, n))
    d_mat = np.empty((n, n))

    def f_of(qq, qqd):
        val = np.asarray(model.force(qq, qqd, u, 0.0), dtype=float)
        if not np.all(np.isfinite(val)):
            raise LinearizationError(
                f"non-finite force while linearizing '{model.name}'"
            )
        return val

    for j in range(n):
        eps = 1e-6 * (1.0 + abs(q[j]))
        dq = np.zeros(n)
        dq[j] = eps
        k_mat[:, j] = -(f_of(q + dq, qd) - f_of(q - dq, qd)) / (2.0 * eps)
        eps = 1e-6 * (1.0 + abs(qd[j]))
        dv = np.zeros(n)
        dv[j] = eps
        d_mat[:, j] = -(f_of(q, qd + dv) - f_of(q, qd - dv)) / (2.0 * eps)
    return k_mat, d_mat


def nullspace_basis(jac, s_tol=DEFAULT_S_TOL) -> np.ndarray:
    """Orthonormal rows spanning ker(G), from the SVD of the constraint Jacobian.

    Singular values above s_tol * sigma_max count as nonzero; with no
    constraints (or an all-zero Jacobian) the basis is the identity.
    """
    if jac is None:
        raise ValueError("constraint Jacobian is required (may be 0 x n_q)")
    g = np.atleast_2d(np.asarray(jac, dtype=float))
    n_q = g.shape[1]
    if g.shape[0] == 0 or not np.any(g):
        return np.eye(n_q)
    _, sing, vh = np.linalg.svd(g, full_matrices=True)
    n_nz = int(np.sum(sing > s_tol * sing[0]))
    return vh[n_nz:].copy()


def project_system(m_mat, k_mat, d_mat, basis):
    """Congruence projection onto the constraint nullspace: (N M N^T, N K N^T, N D N^T)."""
    n = np.asarray(basis, dtype=float)
    return (n @ np.asarray(m_mat) @ n.T,
            n @ np.asarray(k_mat) @ n.T,
            n @ np.asarray(d_mat) @ n.T)


def complex_eigenvalues(m_bar, k_bar, d_bar) -> np.ndarray:
    """All 2*n_f eigenvalues of the projected second-order system.

    Solves the first-order pencil A z + v B z = 0 with
    A = [[K, D], [0, -M]] and B = [[0, M], [M, 0]], whose finite
    eigenvalues are exactly the roots of det(M v^2 + D v + K) = 0.
    Sorted by ascending |Re|, ties by ascending |Im|, then by Im.
    """
    m_bar = np.atleast_2d(np.asarray(m_bar, dtype=float))
    k_bar = np.atleast_2d(np.asarray(k_bar, dtype=float))
    d_bar = np.atleast_2d(np.asarray(d_bar, dtype=float))
    n_f = m_bar.shape[0]
    if n_f == 0:
        return np.zeros(0, dtype=complex)
    zero = np.zeros_like(m_bar)
    a_mat = np.block([[k_bar, d_bar], [zero, -m_bar]])
    b_mat = np.block([[zero, m_bar], [m_bar, zero]])
    try:
        vals = scipy.linalg.eig(-a_mat, b_mat, right=False)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise EigenError(f"eigen solve failed: {exc}") from exc
    if not np.all(np.isfinite(vals)):
        raise EigenError("projected mass matrix is singular (infinite eigenvalues)")
    return sort_eigenvalues(vals)


def _quantize(x, sig_digits=12):
    """Round magnitudes to a fixed number of significant digits so that
    rounding-level differences (e.g. within LAPACK conjugate pairs) tie."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    nz = x != 0.0
    if np.any(nz):
        exp = np.floor(np.log10(np.abs(x[nz])))
        scale = 10.0 ** (sig_digits - 1 - exp)
        out[nz] = np.round(x[nz] * scale) / scale
    return out


def sort_eigenvalues(vals) -> np.ndarray:
    """Deterministic order: ascending |Re|, ties by ascending |Im|, then Im.

    Tie detection is tolerant to rounding so conjugate pairs always come out
    as (v, conj(v)) with negative imaginary part first.
    """
    vals = np.asarray(vals, dtype=complex)
    order = np.lexsort((vals.real, vals.imag,
                        _quantize(np.abs(vals.imag)),
                        _quantize(np.abs(vals.real))))
    return vals[order]


def decay_time(v, a_rel=DEFAULT_A_REL) -> float:
    """Time for a mode to decay to relative amplitude a_rel: ln(a_rel)/Re(v).

    Modes with Re(v) >= 0 never decay; those return +inf rather than raising.
    """
    if not (0.0 < a_rel < 1.0):
        raise ValueError(f"a_rel must be in (0, 1), got {a_rel!r}")
    re = float(np.real(v))
    if re >= 0.0:
        return math.inf
    return math.log(a_rel) / re


@dataclass
class LinearizationReport:
    """Everything produced by one linearization: tangents, projection, spectrum."""

    q_lin: np.ndarray
    qdot_lin: np.ndarray
    k_mat: np.ndarray
    d_mat: np.ndarray
    jac: np.ndarray
    basis: np.ndarray
    m_bar: np.ndarray
    k_bar: np.ndarray
    d_bar: np.ndarray
    eigenvalues: np.ndarray
    decay_times: np.ndarray
    s_tol: float
    a_rel: float

    @property
    def slowest_decay(self) -> float:
        finite = self.decay_times[np.isfinite(self.decay_times)]
        return float(finite.max()) if finite.size else math.inf


def linearize(model: SystemModel, q_lin=None, qdot_lin=None, u=None, t=0.0,
              s_tol=DEFAULT_S_TOL, a_rel=DEFAULT_A_REL) -> LinearizationReport:
    """Full pipeline at one state (defaults to the model's initial state)."""
    q = np.asarray(model.q0 if q_lin is None else q_lin, dtype=float)
    qd = np.asarray(model.qdot0 if qdot_lin is None else qdot_lin, dtype=float)
    u = np.zeros(model.n_u) if u is None else np.asarray(u, dtype=float)

    k_mat, d_mat = tangent_matrices(model, q, qd, u)
    if model.n_a > 0 and model.constraint_jacobian is not None:
        jac = np.asarray(model.constraint_jacobian(q, t), dtype=float)
    else:
        jac = np.zeros((0, model.n_q))
    basis = nullspace_basis(jac, s_tol=s_tol) if jac.shape[0] else np.eye(model.n_q)
    m_bar, k_bar, d_bar = project_system(np.asarray(model.mass(q), dtype=float),
                                         k_mat, d_mat, basis)
    vals = complex_eigenvalues(m_bar, k_bar, d_bar)
    t_d = np.array([decay_time(v, a_rel) for v in vals])
    return LinearizationReport(q_lin=q, qdot_lin=qd, k_mat=k_mat, d_mat=d_mat,
                               jac=jac, basis=basis, m_bar=m_bar, k_bar=k_bar,
                               d_bar=d_bar, eigenvalues=vals, decay_times=t_d,
                               s_tol=s_tol, a_rel=a_rel)


@dataclass
class SampleDecay:
    step: int
    eigenvalues: np.ndarray
    slow_re: float
    t_d: float


@dataclass
class TrajectoryDecayReport:
    """Decay statistics gathered along a trajectory.

    t_d_mean follows from the mean real part of the slowest damped mode
    over the sampled states; t_d_max is the worst instantaneous value.
    """

    a_rel: float
    re_mean: float
    t_d_mean: float
    t_d_max: float
    samples: list[SampleDecay] = field(default_factory=list)


def trajectory_mean_decay(model: SystemModel, traj: Trajectory,
                          a_rel=DEFAULT_A_REL, stride=1,
                          rigid_tol=DEFAULT_RIGID_TOL,
                          s_tol=DEFAULT_S_TOL) -> TrajectoryDecayReport:
    """Linearize at every stride-th trajectory sample and track the slowest
    damped (non-rigid) mode; modes with |Re(v)| < rigid_tol are excluded."""
    if len(traj) == 0:
        raise ValueError("trajectory is empty")
    if stride < 1:
        raise ValueError("stride must be >= 1")

    samples = []
    for i in range(0, len(traj), stride):
        rep = linearize(model, traj.q[i], traj.qdot[i], traj.u[i],
                        t=i * traj.h, s_tol=s_tol, a_rel=a_rel)
        res = rep.eigenvalues.real
        damped = res[(res < -rigid_tol)]
        if damped.size == 0:
            raise NoDampedModeError(
                f"all modes rigid or undamped at sample {i} of '{model.name}'"
            )
        slow = float(damped.max())
        samples.append(SampleDecay(step=i, eigenvalues=rep.eigenvalues,
                                   slow_re=slow, t_d=math.log(a_rel) / slow))

    re_mean = float(np.mean([s.slow_re for s in samples]))
    return TrajectoryDecayReport(
        a_rel=a_rel,
        re_mean=re_mean,
        t_d_mean=math.log(a_rel) / re_mean,
        t_d_max=max(s.t_d for s in samples),
        samples=samples,
    )


def modal_response(m_bar, d_bar, k_bar, q0, qdot0, times) -> np.ndarray:
    """Free response q(t) = sum_i Phi_i p0_i exp(v_i t) of the projected system.

    Diagnostic reconstruction from the eigen decomposition of the first-order
    form; p0 solves Phi p0 = [q0, qdot0].
    """
    m_bar = np.atleast_2d(np.asarray(m_bar, dtype=float))
    k_bar = np.atleast_2d(np.asarray(k_bar, dtype=float))
    d_bar = np.atleast_2d(np.asarray(d_bar, dtype=float))
    n_f = m_bar.shape[0]
    a_sys = np.block([
        [np.zeros((n_f, n_f)), np.eye(n_f)],
        [-np.linalg.solve(m_bar, k_bar), -np.linalg.solve(m_bar, d_bar)],
    ])
    vals, phi = np.linalg.eig(a_sys)
    z0 = np.concatenate([np.atleast_1d(np.asarray(q0, dtype=float)),
                         np.atleast_1d(np.asarray(qdot0, dtype=float))])
    p0 = np.linalg.solve(phi, z0.astype(complex))
    times = np.asarray(times, dtype=float)
    z_t = (phi[None, :, :] * np.exp(np.outer(times, vals))[:, None, :]) @ p0
    return z_t[:, :n_f].real
