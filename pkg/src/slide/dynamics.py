"""Dynamic-system abstraction, fixed-step integrators, and drive-signal generators.

Systems are described in redundant coordinates q with a mass matrix M(q),
a generalized force vector f(q, qdot, u, t), optional holonomic constraints
g(q, t) = 0 with Jacobian G = dg/dq, and an output map y(q, qdot, u, t).
Plain ODE systems simply have no constraints.

Integration is explicit: classical 4th-order Runge-Kutta for ODEs, and the
same scheme wrapped around an acceleration-level saddle-point solve with
Baumgarte stabilization for constrained systems. Inputs are held constant
across each output-grid step (zero-order hold); internally every grid step
is subdivided into `substeps` RK4 steps.

All functions are pure with per-call state, so distinct trajectories may be
integrated concurrently from multiple threads.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    ConfigError,
    ConstraintDegeneracyError,
    IntegrationDivergedError,
)

DEFAULT_SUBSTEPS = 8


@dataclass
class SystemModel:
    """A second-order dynamic system in redundant coordinates.

    Attributes:
        name: identifier used in CLIs and file metadata.
        n_q, n_a, n_u, n_y: counts of coordinates, constraints, inputs, outputs.
        mass: q -> (n_q, n_q) symmetric positive definite matrix.
        force: (q, qdot, u, t) -> (n_q,) generalized force vector.
        q0, qdot0: initial state; must satisfy the constraints.
        constraint: (q, t) -> (n_a,) position-level constraint residual.
        constraint_jacobian: (q, t) -> (n_a, n_q) matrix dg/dq.
        output: (q, qdot, u, t) -> (n_y,) user-level outputs; defaults to q.
        potential: q -> scalar elastic potential, used for energy bookkeeping.
    """

    name: str
    n_q: int
    n_a: int
    n_u: int
    n_y: int
    mass: Callable[[np.ndarray], np.ndarray]
    force: Callable[[np.ndarray, np.ndarray, np.ndarray, float], np.ndarray]
    q0: np.ndarray
    qdot0: np.ndarray
    constraint: Callable[[np.ndarray, float], np.ndarray] | None = None
    constraint_jacobian: Callable[[np.ndarray, float], np.ndarray] | None = None
    output: Callable[[np.ndarray, np.ndarray, np.ndarray, float], np.ndarray] | None = None
    potential: Callable[[np.ndarray], float] | None = None
    # optional analytic convective term (dG/dt) qdot; finite differences otherwise
    constraint_convective: Callable[[np.ndarray, np.ndarray, float], np.ndarray] | None = None

    def outputs(self, q, qdot, u, t):
        if self.output is None:
            return np.asarray(q, dtype=float)
        return np.asarray(self.output(q, qdot, u, t), dtype=float)

    def energy(self, q, qdot):
        """Kinetic plus elastic potential energy at a state."""
        q = np.asarray(q, dtype=float)
        qdot = np.asarray(qdot, dtype=float)
        e = 0.5 * qdot @ (np.asarray(self.mass(q)) @ qdot)
        if self.potential is not None:
            e += self.potential(q)
        return float(e)

    def check_consistent(self, tol=1e-10):
        """Verify the initial state satisfies the constraints to `tol`."""
        if self.n_a == 0 or self.constraint is None:
            return
        g = np.asarray(self.constraint(self.q0, 0.0), dtype=float)
        worst = float(np.max(np.abs(g))) if g.size else 0.0
        if worst > tol:
            raise ConfigError(
                f"inconsistent initial conditions for '{self.name}': |g(q0,0)| = {worst:.3e} > {tol:.1e}"
            )


@dataclass
class Trajectory:
    """States, inputs, and outputs sampled on a fixed grid t_i = i*h."""

    h: float
    q: np.ndarray      # (n_samples, n_q)
    qdot: np.ndarray   # (n_samples, n_q)
    u: np.ndarray      # (n_samples, n_u)
    y: np.ndarray      # (n_samples, n_y)
    system: str = ""
    seed: int | None = None

    def __len__(self):
        return self.q.shape[0]

    @property
    def times(self):
        return np.arange(len(self)) * self.h

    def tail(self, start: int) -> "Trajectory":
        """Drop the first `start` samples and rebase time to zero."""
        return Trajectory(
            h=self.h,
            q=self.q[start:].copy(),
            qdot=self.qdot[start:].copy(),
            u=self.u[start:].copy(),
            y=self.y[start:].copy(),
            system=self.system,
            seed=self.seed,
        )


@dataclass
class DriveSignal:
    """Input samples on the integration grid, applied with zero-order hold.

    `u` has one row per grid point; the value of row i acts on [i*h, (i+1)*h).
    The last row keeps acting if the integration horizon runs past the signal.
    """

    kind: str
    u: np.ndarray  # (n_samples, n_u)
    seed: int | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.u = np.atleast_2d(np.asarray(self.u, dtype=float))
        if self.u.ndim != 2:
            raise ConfigError("drive signal samples must form a 2-D array")

    @property
    def n_samples(self):
        return self.u.shape[0]

    @property
    def n_u(self):
        return self.u.shape[1]

    def at_step(self, i: int) -> np.ndarray:
        return self.u[min(i, self.n_samples - 1)]

    def scaled(self, factor: float) -> "DriveSignal":
        return DriveSignal(self.kind, self.u * factor, seed=self.seed,
                           params={**self.params, "amplitude_factor": factor})


def pd_torque(target, actual, gains):
    """PD control torque: P*(phi_des - phi) + D*(omega_des - omega)."""
    phi_des, omega_des = target
    phi, omega = actual
    p, d = gains
    return p * (phi_des - phi) + d * (omega_des - omega)


# ---------------------------------------------------------------------------
# integrators
# ---------------------------------------------------------------------------

def _rk4(deriv, state, t, dt):
    k1 = deriv(state, t)
    k2 = deriv(state + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = deriv(state + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = deriv(state + dt * k3, t + dt)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_drive(model, drive, n_steps):
    if drive.n_u != model.n_u:
        raise ConfigError(
            f"drive has {drive.n_u} input channels, model '{model.name}' expects {model.n_u}"
        )
    if drive.n_samples < n_steps + 1:
        raise ConfigError(
            f"drive covers {drive.n_samples} samples, need {n_steps + 1} for {n_steps} steps"
        )


def integrate_ode(model: SystemModel, drive: DriveSignal, h: float, n_steps: int,
                  substeps: int = DEFAULT_SUBSTEPS) -> Trajectory:
    """Integrate an unconstrained system with classical RK4.

    The input is held constant over each grid step; each grid step is taken
    as `substeps` internal RK4 steps of size h/substeps.
    """
    if model.n_a != 0:
        raise ConfigError(f"'{model.name}' has constraints; use integrate_dae")
    if h <= 0.0 or n_steps < 0 or substeps < 1:
        raise ConfigError("h must be > 0, n_steps >= 0, substeps >= 1")
    _check_drive(model, drive, n_steps)

    n_q = model.n_q
    dt = h / substeps
    state = np.concatenate([np.asarray(model.q0, dtype=float),
                            np.asarray(model.qdot0, dtype=float)])

    q_hist = np.empty((n_steps + 1, n_q))
    qd_hist = np.empty((n_steps + 1, n_q))
    u_hist = np.empty((n_steps + 1, model.n_u))
    y_hist = np.empty((n_steps + 1, model.n_y))

    def record(i):
        q, qd = state[:n_q], state[n_q:]
        u_i = drive.at_step(i)
        q_hist[i] = q
        qd_hist[i] = qd
        u_hist[i] = u_i
        y_hist[i] = model.outputs(q, qd, u_i, i * h)

    record(0)
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n_steps):
            u_i = drive.at_step(i)

            def deriv(s, t, u_i=u_i):
                q, qd = s[:n_q], s[n_q:]
                f = np.asarray(model.force(q, qd, u_i, t), dtype=float)
                qdd = np.linalg.solve(np.asarray(model.mass(q), dtype=float), f)
                return np.concatenate([qd, qdd])

            t = i * h
            for k in range(substeps):
                state = _rk4(deriv, state, t + k * dt, dt)
            if not np.all(np.isfinite(state)):
                raise IntegrationDivergedError(i + 1, f"system '{model.name}'")
            record(i + 1)

    return Trajectory(h=h, q=q_hist, qdot=qd_hist, u=u_hist, y=y_hist,
                      system=model.name, seed=drive.seed)


def _make_constrained_accel(model, alpha, beta):
    """Stage solver for the acceleration-level saddle-point system.

    Each evaluation solves [[M, G^T], [G, 0]] [qdd, lambda] = [f, c] where c
    carries the convective term plus the Baumgarte feedback
    -2*alpha*gdot - beta^2*g. Constraints are treated as time-independent
    for the convective term. The work buffer is reused across stages.
    """
    from scipy.linalg import lapack

    n_q, n_a = model.n_q, model.n_a
    size = n_q + n_a
    lhs = np.zeros((size, size))
    rhs = np.empty(size)

    def accel(q, qd, u, t):
        m = np.asarray(model.mass(q), dtype=float)
        f = np.asarray(model.force(q, qd, u, t), dtype=float)
        g = np.asarray(model.constraint(q, t), dtype=float)
        gq = np.asarray(model.constraint_jacobian(q, t), dtype=float)

        gdot = gq @ qd
        if model.constraint_convective is not None:
            conv = np.asarray(model.constraint_convective(q, qd, t), dtype=float)
        else:
            # convective term (dG/dt) qd by a central directional difference along qd
            eps = 1e-6
            gq_p = np.asarray(model.constraint_jacobian(q + eps * qd, t), dtype=float)
            gq_m = np.asarray(model.constraint_jacobian(q - eps * qd, t), dtype=float)
            conv = ((gq_p - gq_m) @ qd) / (2.0 * eps)

        lhs[:n_q, :n_q] = m
        lhs[:n_q, n_q:] = gq.T
        lhs[n_q:, :n_q] = gq
        rhs[:n_q] = f
        rhs[n_q:] = -conv - 2.0 * alpha * gdot - beta * beta * g
        _, _, sol, info = lapack.dgesv(lhs, rhs)
        if info != 0:
            raise ConstraintDegeneracyError(
                f"singular constrained system for '{model.name}' at t={t:.6g} "
                f"(dgesv info={info})"
            )
        return sol[:n_q]

    return accel


def integrate_dae(model: SystemModel, drive: DriveSignal, h: float, n_steps: int,
                  baumgarte: tuple[float, float] | None = None,
                  substeps: int = DEFAULT_SUBSTEPS) -> Trajectory:
    """Integrate a constrained system, RK4 over the stabilized index-1 form.

    Every RK4 stage solves [[M, G^T], [G, 0]] for the accelerations and
    multipliers, with Baumgarte terms -2*alpha*gdot - beta^2*g appended to
    the constraint accelerations. `baumgarte` defaults to alpha = beta = 20/h,
    which keeps the stabilized constraint dynamics inside the RK4 stability
    region for any substep count >= 8.
    """
    if model.n_a == 0:
        return integrate_ode(model, drive, h, n_steps, substeps=substeps)
    if model.constraint is None or model.constraint_jacobian is None:
        raise ConfigError(f"'{model.name}' declares constraints but lacks g or G")
    if h <= 0.0 or n_steps < 0 or substeps < 1:
        raise ConfigError("h must be > 0, n_steps >= 0, substeps >= 1")
    _check_drive(model, drive, n_steps)
    model.check_consistent()

    alpha, beta = baumgarte if baumgarte is not None else (20.0 / h, 20.0 / h)
    n_q = model.n_q
    dt = h / substeps
    state = np.concatenate([np.asarray(model.q0, dtype=float),
                            np.asarray(model.qdot0, dtype=float)])

    q_hist = np.empty((n_steps + 1, n_q))
    qd_hist = np.empty((n_steps + 1, n_q))
    u_hist = np.empty((n_steps + 1, model.n_u))
    y_hist = np.empty((n_steps + 1, model.n_y))

    def record(i):
        q, qd = state[:n_q], state[n_q:]
        u_i = drive.at_step(i)
        q_hist[i] = q
        qd_hist[i] = qd
        u_hist[i] = u_i
        y_hist[i] = model.outputs(q, qd, u_i, i * h)

    accel = _make_constrained_accel(model, alpha, beta)

    record(0)
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n_steps):
            u_i = drive.at_step(i)

            def deriv(s, t, u_i=u_i):
                q, qd = s[:n_q], s[n_q:]
                return np.concatenate([qd, accel(q, qd, u_i, t)])

            t = i * h
            for k in range(substeps):
                state = _rk4(deriv, state, t + k * dt, dt)
            if not np.all(np.isfinite(state)):
                raise IntegrationDivergedError(i + 1, f"system '{model.name}'")
            record(i + 1)

    return Trajectory(h=h, q=q_hist, qdot=qd_hist, u=u_hist, y=y_hist,
                      system=model.name, seed=drive.seed)


# ---------------------------------------------------------------------------
# drive-signal generators
# ---------------------------------------------------------------------------

def gen_random_step_force(bounds, n_steps, seed) -> DriveSignal:
    """Uniform random force per step, piecewise constant on the grid."""
    lo, hi = float(bounds[0]), float(bounds[1])
    if lo > hi:
        raise ConfigError(f"force bounds out of order: [{lo}, {hi}]")
    rng = np.random.default_rng(seed)
    u = rng.uniform(lo, hi, size=(n_steps + 1, 1))
    return DriveSignal("random-step-force", u, seed=_seed_of(seed),
                       params={"lo": lo, "hi": hi})


def gen_accel_trajectory(n_steps, h, seed, omega_max=8.0, accel_max=20.0,
                         phase_steps=(20, 60), p_zero=0.10,
                         phi0_range=(-math.pi, math.pi)) -> DriveSignal:
    """Desired angle/velocity with piecewise-constant acceleration phases.

    Each phase lasts an integer number of steps drawn uniformly from
    `phase_steps` (inclusive); its acceleration is zero with probability
    `p_zero`, otherwise uniform in [-accel_max, accel_max]. The velocity is
    clamped at +/- omega_max and the angle is its exact trapezoidal
    integral, so re-integrating the emitted velocities reproduces the
    emitted angles. Starts from a uniform random angle at zero velocity.

    Emits two channels per sample: (phi_des, omega_des).
    """
    if omega_max <= 0.0 or accel_max <= 0.0:
        raise ConfigError("velocity and acceleration limits must be positive")
    rng = np.random.default_rng(seed)
    lo, hi = int(phase_steps[0]), int(phase_steps[1])

    phi = np.empty(n_steps + 1)
    omega = np.empty(n_steps + 1)
    phi[0] = rng.uniform(phi0_range[0], phi0_range[1])
    omega[0] = 0.0

    i = 0
    while i < n_steps:
        length = int(rng.integers(lo, hi + 1))
        accel = 0.0 if rng.uniform() < p_zero else float(rng.uniform(-accel_max, accel_max))
        for _ in range(length):
            if i >= n_steps:
                break
            w_next = min(max(omega[i] + accel * h, -omega_max), omega_max)
            omega[i + 1] = w_next
            phi[i + 1] = phi[i] + 0.5 * (omega[i] + w_next) * h
            i += 1

    u = np.column_stack([phi, omega])
    return DriveSignal("piecewise-constant-acceleration", u, seed=_seed_of(seed),
                       params={"omega_max": omega_max, "accel_max": accel_max,
                               "p_zero": p_zero})


def gen_ptp(waypoints, segment_times, n_steps) -> DriveSignal:
    """Point-to-point motion: constant-acceleration (triangular velocity) segments.

    Each joint moves from one waypoint to the next with a symmetric
    accelerate/decelerate profile, arriving with zero velocity exactly at
    the segment boundary. Emits angle channels followed by velocity
    channels, sampled on n_steps+1 grid points spanning all segments.
    """
    wp = np.atleast_2d(np.asarray(waypoints, dtype=float))
    if wp.shape[0] == 1 and len(np.asarray(waypoints).shape) == 1:
        wp = wp.T  # a flat list of scalar waypoints: one joint
    seg = np.asarray(segment_times, dtype=float)
    if wp.shape[0] != seg.shape[0] + 1:
        raise ConfigError(
            f"waypoint count {wp.shape[0]} must equal segment count {seg.shape[0]} + 1"
        )
    if np.any(seg <= 0.0):
        raise ConfigError("segment times must be positive")

    total = float(seg.sum())
    starts = np.concatenate([[0.0], np.cumsum(seg)])
    t_grid = np.linspace(0.0, total, n_steps + 1)
    n_joints = wp.shape[1]
    ang = np.empty((n_steps + 1, n_joints))
    vel = np.empty((n_steps + 1, n_joints))

    for idx, t in enumerate(t_grid):
        k = min(int(np.searchsorted(starts[1:], t, side="right")), len(seg) - 1)
        tau = t - starts[k]
        big_t = seg[k]
        qa, qb = wp[k], wp[k + 1]
        acc = 4.0 * (qb - qa) / big_t**2
        if tau <= big_t / 2.0:
            ang[idx] = qa + 0.5 * acc * tau * tau
            vel[idx] = acc * tau
        else:
            rem = big_t - tau
            ang[idx] = qb - 0.5 * acc * rem * rem
            vel[idx] = acc * rem

    u = np.hstack([ang, vel])
    return DriveSignal("point-to-point", u,
                       params={"segments": seg.tolist(), "duration": total})


def _seed_of(seed):
    return int(seed) if isinstance(seed, (int, np.integer)) else None


# ---------------------------------------------------------------------------
# trajectory CSV export / import
# ---------------------------------------------------------------------------

def trajectory_to_csv(traj: Trajectory, path):
    """Write `t,q...,qdot...,u...,y...` with shortest round-trip decimals."""
    header = (["t"]
              + [f"q{i}" for i in range(traj.q.shape[1])]
              + [f"qdot{i}" for i in range(traj.qdot.shape[1])]
              + [f"u{i}" for i in range(traj.u.shape[1])]
              + [f"y{i}" for i in range(traj.y.shape[1])])
    times = traj.times
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(traj)):
            row = [times[i], *traj.q[i], *traj.qdot[i], *traj.u[i], *traj.y[i]]
            writer.writerow([repr(float(v)) for v in row])


def trajectory_from_csv(path) -> Trajectory:
    """Read a trajectory written by `trajectory_to_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2 or header[0] != "t":
        raise ConfigError(f"not a trajectory CSV: {path}")

    def cols(prefix):
        idx = [j for j, name in enumerate(header) if name.startswith(prefix)
               and name[len(prefix):].isdigit()]
        return data[:, idx] if idx else np.zeros((data.shape[0], 0))

    t = data[:, 0]
    h = float(t[1] - t[0]) if len(t) > 1 else 0.0
    return Trajectory(h=h, q=cols("q"), qdot=cols("qdot"), u=cols("u"), y=cols("y"))
