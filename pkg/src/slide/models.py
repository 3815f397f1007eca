"""Concrete system models: spring-damper oscillators, a constrained two-mass
validation fixture, and a planar slider-crank with a lumped-compliance rod.

Model construction is pure; the returned `SystemModel` objects are immutable
in practice and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import SystemModel, pd_torque
from .errors import ConfigError, KinematicsError


@dataclass(frozen=True)
class OscillatorParams:
    """Single-mass oscillator with an optional cubic hardening spring.

    force_scale is the factor that maps physical force to the normalized
    network input channel (it does not affect the dynamics).
    """

    m: float = 1.0
    k: float = 1600.0
    d: float = 8.0
    alpha: float = 0.0
    force_scale: float = 5e-4

    def __post_init__(self):
        if self.m <= 0.0 or self.k <= 0.0 or self.d < 0.0:
            raise ConfigError("oscillator needs m, k > 0 and d >= 0")

    @property
    def omega0(self):
        """Undamped natural frequency at the origin, sqrt(k/m)."""
        return math.sqrt(self.k / self.m)

    @property
    def damping_ratio(self):
        return self.d / (2.0 * self.m * self.omega0)

    def omega0_at(self, x_bar):
        """Linearized natural frequency at displacement x_bar."""
        return math.sqrt(self.k * (1.0 + 3.0 * self.alpha * x_bar**2) / self.m)


LINEAR_OSCILLATOR = OscillatorParams()
DUFFING = OscillatorParams(alpha=0.5, force_scale=1e-3)


def make_oscillator(params: OscillatorParams = LINEAR_OSCILLATOR,
                    x0: float = 0.0, v0: float = 0.0) -> SystemModel:
    """m*xdd + d*xd + k*x + alpha*k*x^3 = F, driven by one force input."""
    m, k, d, alpha = params.m, params.k, params.d, params.alpha
    mass = np.array([[m]])

    def force(q, qd, u, t):
        x, xd = q[0], qd[0]
        return np.array([u[0] - d * xd - k * x - alpha * k * x**3])

    def output(q, qd, u, t):
        return np.array([q[0]])

    def potential(q):
        x = q[0]
        return 0.5 * k * x * x + 0.25 * alpha * k * x**4

    name = "duffing" if alpha != 0.0 else "linear_oscillator"
    return SystemModel(
        name=name, n_q=1, n_a=0, n_u=1, n_y=1,
        mass=lambda q: mass, force=force,
        q0=np.array([float(x0)]), qdot0=np.array([float(v0)]),
        output=output, potential=potential,
    )


def make_two_mass_constrained(x0=(0.0, 0.0), v0=(0.0, 0.0),
                              params: OscillatorParams = LINEAR_OSCILLATOR) -> SystemModel:
    """Two identical oscillators rigidly tied together by g = q1 - q2.

    Validation fixture: the nullspace projection must reduce it to a single
    oscillator with the same eigenvalues.
    """
    m, k, d = params.m, params.k, params.d
    mass = np.diag([m, m])
    jac = np.array([[1.0, -1.0]])

    def force(q, qd, u, t):
        return np.array([
            u[0] - d * qd[0] - k * q[0],
            -d * qd[1] - k * q[1],
        ])

    def constraint(q, t):
        return np.array([q[0] - q[1]])

    def output(q, qd, u, t):
        return np.array([q[0]])

    def potential(q):
        return 0.5 * k * (q[0] ** 2 + q[1] ** 2)

    return SystemModel(
        name="two_mass_constrained", n_q=2, n_a=1, n_u=1, n_y=1,
        mass=lambda q: mass, force=force,
        q0=np.asarray(x0, dtype=float), qdot0=np.asarray(v0, dtype=float),
        constraint=constraint, constraint_jacobian=lambda q, t: jac,
        output=output, potential=potential,
    )


# ---------------------------------------------------------------------------
# slider-crank with lumped rod compliance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SliderCrankParams:
    """Planar slider-crank geometry, masses, and lumped rod compliance.

    The flexible connecting rod is approximated by two rigid half-segments
    joined by a torsional spring-damper hinge; `k_theta` is sized so the
    pseudo-rigid hinge reproduces the first bending stiffness of a pinned
    rod of bending stiffness EI, and the hinge damping mirrors the rod's
    stiffness-proportional damping factor.
    """

    l1: float = 0.5
    l2: float = 1.0
    m1: float = 2.0
    m2: float = 4.0
    m3: float = 1.0
    ei: float = 13.8
    hinge_damping_factor: float = 0.015

    def __post_init__(self):
        if min(self.l1, self.l2, self.m1, self.m2, self.m3, self.ei) <= 0.0:
            raise ConfigError("slider-crank lengths, masses, and EI must be positive")
        if self.l2 <= self.l1:
            raise ConfigError("need l2 > l1 so the mechanism has no dead points")

    @property
    def k_theta(self):
        return math.pi**2 * self.ei / self.l2

    @property
    def d_theta(self):
        return self.hinge_damping_factor * self.k_theta


SLIDER_CRANK = SliderCrankParams()

DEFAULT_PD_GAINS = (100.0, 20.0)  # P [N*m/rad], D [N*m*s/rad]


def rigid_slider_position(phi, l1=SLIDER_CRANK.l1, l2=SLIDER_CRANK.l2):
    """Slider position of the rigid mechanism: l1*cos(phi) + sqrt(l2^2 - l1^2*sin(phi)^2)."""
    s = l1 * math.sin(phi)
    disc = l2 * l2 - s * s
    if disc < 0.0:
        raise KinematicsError(
            f"no slider solution at phi={phi!r}: l2^2 < l1^2 sin(phi)^2"
        )
    return l1 * math.cos(phi) + math.sqrt(disc)


def assemble_slider_crank_state(phi0, params: SliderCrankParams = SLIDER_CRANK):
    """Consistent straight-rod rest state at crank angle phi0.

    Coordinates: [phi, x1, y1, th1, x2, y2, th2, xs] with (x1,y1,th1) and
    (x2,y2,th2) the rod half-segment centers/orientations and xs the slider.
    """
    l1, l2 = params.l1, params.l2
    xp = rigid_slider_position(phi0, l1, l2)
    ax, ay = l1 * math.cos(phi0), l1 * math.sin(phi0)
    psi = math.atan2(-ay, xp - ax)
    c, s = math.cos(psi), math.sin(psi)
    q0 = np.array([
        phi0,
        ax + 0.25 * l2 * c, ay + 0.25 * l2 * s, psi,
        ax + 0.75 * l2 * c, ay + 0.75 * l2 * s, psi,
        xp,
    ])
    return q0, np.zeros(8)


def make_slider_crank_lumped(params: SliderCrankParams = SLIDER_CRANK,
                             phi0: float = 0.0,
                             input_mode: str = "pd",
                             gains=DEFAULT_PD_GAINS,
                             hinge_moment: float = 0.0,
                             stiffness_scale: float = 1.0) -> SystemModel:
    """Planar slider-crank in redundant coordinates with a flexible rod stand-in.

    Bodies: rigid crank pinned at the origin (angle phi), two rigid rod
    half-segments joined by a torsional spring-damper hinge, and a slider
    constrained to the x axis. Revolute joints close the loop, giving
    n_q = 8 coordinates and n_a = 6 constraints (two mechanism DOF: crank
    rotation and rod flex).

    input_mode "pd" takes u = (phi_des, omega_des) and applies a PD torque
    to the crank; "torque" takes u = (tau,) directly. `hinge_moment` adds a
    constant external couple across the mid-rod hinge (static test hook);
    `stiffness_scale` scales the hinge spring only, so the rigid limit can
    be probed without changing the damper.

    Outputs: y = (x_p, d_mid), the slider position and the transverse
    deviation of the mid-rod hinge from the chord joining crank pin to
    slider pin (positive to the left of the chord).
    """
    if input_mode not in ("pd", "torque"):
        raise ConfigError(f"unknown input_mode {input_mode!r}")
    p = params
    a = p.l2 / 4.0            # half-length of one rod segment
    m_seg = p.m2 / 2.0
    i_crank = p.m1 * p.l1**2 / 3.0          # uniform rod about its end pivot
    i_seg = m_seg * (p.l2 / 2.0)**2 / 12.0  # uniform segment about its center
    k_th = p.k_theta * stiffness_scale
    d_th = p.d_theta
    p_gain, d_gain = gains

    mass = np.diag([i_crank, m_seg, m_seg, i_seg, m_seg, m_seg, i_seg, p.m3])

    def constraint(q, t):
        phi, x1, y1, th1, x2, y2, th2, xs = q
        c1, s1 = math.cos(th1), math.sin(th1)
        c2, s2 = math.cos(th2), math.sin(th2)
        ax, ay = p.l1 * math.cos(phi), p.l1 * math.sin(phi)
        return np.array([
            (x1 - a * c1) - ax,
            (y1 - a * s1) - ay,
            (x2 - a * c2) - (x1 + a * c1),
            (y2 - a * s2) - (y1 + a * s1),
            (x2 + a * c2) - xs,
            (y2 + a * s2),
        ])

    def constraint_jacobian(q, t):
        phi, x1, y1, th1, x2, y2, th2, xs = q
        c1, s1 = math.cos(th1), math.sin(th1)
        c2, s2 = math.cos(th2), math.sin(th2)
        lc, ls = p.l1 * math.cos(phi), p.l1 * math.sin(phi)
        jac = np.zeros((6, 8))
        jac[0, 0] = ls;   jac[0, 1] = 1.0;  jac[0, 3] = a * s1
        jac[1, 0] = -lc;  jac[1, 2] = 1.0;  jac[1, 3] = -a * c1
        jac[2, 1] = -1.0; jac[2, 3] = a * s1;  jac[2, 4] = 1.0;  jac[2, 6] = a * s2
        jac[3, 2] = -1.0; jac[3, 3] = -a * c1; jac[3, 5] = 1.0;  jac[3, 6] = -a * c2
        jac[4, 4] = 1.0;  jac[4, 6] = -a * s2; jac[4, 7] = -1.0
        jac[5, 5] = 1.0;  jac[5, 6] = a * c2
        return jac

    def constraint_convective(q, qd, t):
        # (dG/dt) qdot: each Jacobian entry depends on a single angle
        phi, th1, th2 = q[0], q[3], q[6]
        dphi2, dth1_2, dth2_2 = qd[0] ** 2, qd[3] ** 2, qd[6] ** 2
        c1, s1 = math.cos(th1), math.sin(th1)
        c2, s2 = math.cos(th2), math.sin(th2)
        lc, ls = p.l1 * math.cos(phi), p.l1 * math.sin(phi)
        return np.array([
            lc * dphi2 + a * c1 * dth1_2,
            ls * dphi2 + a * s1 * dth1_2,
            a * c1 * dth1_2 + a * c2 * dth2_2,
            a * s1 * dth1_2 + a * s2 * dth2_2,
            -a * c2 * dth2_2,
            -a * s2 * dth2_2,
        ])

    def force(q, qd, u, t):
        f = np.zeros(8)
        delta = q[6] - q[3]
        delta_dot = qd[6] - qd[3]
        m_h = k_th * delta + d_th * delta_dot
        f[3] = m_h - hinge_moment
        f[6] = -m_h + hinge_moment
        if input_mode == "pd":
            f[0] += pd_torque((u[0], u[1]), (q[0], qd[0]), (p_gain, d_gain))
        else:
            f[0] += u[0]
        return f

    def output(q, qd, u, t):
        phi, x1, y1, th1 = q[0], q[1], q[2], q[3]
        xs = q[7]
        ax, ay = p.l1 * math.cos(phi), p.l1 * math.sin(phi)
        hx, hy = x1 + a * math.cos(th1), y1 + a * math.sin(th1)
        cx, cy = xs - ax, -ay
        norm = math.hypot(cx, cy)
        d_mid = (cx * (hy - ay) - cy * (hx - ax)) / norm
        return np.array([xs, d_mid])

    def potential(q):
        delta = q[6] - q[3]
        return 0.5 * k_th * delta * delta

    q0, qd0 = assemble_slider_crank_state(phi0, p)
    return SystemModel(
        name="slider_crank_lumped", n_q=8, n_a=6,
        n_u=2 if input_mode == "pd" else 1, n_y=2,
        mass=lambda q: mass, force=force, q0=q0, qdot0=qd0,
        constraint=constraint, constraint_jacobian=constraint_jacobian,
        output=output, potential=potential,
        constraint_convective=constraint_convective,
    )


def director_encode(angles) -> np.ndarray:
    """Encode angles as unit vectors (cos, sin): continuous across the +/-pi wrap."""
    ang = np.asarray(angles, dtype=float)
    return np.stack([np.cos(ang), np.sin(ang)], axis=-1)


_BUILDERS = {
    "linear_oscillator": lambda: make_oscillator(LINEAR_OSCILLATOR),
    "duffing": lambda: make_oscillator(DUFFING),
    "two_mass_constrained": make_two_mass_constrained,
    "slider_crank_lumped": make_slider_crank_lumped,
}


def make_system(name: str, **kwargs) -> SystemModel:
    """Construct a named system; names match the CLI's --system choices."""
    if name not in _BUILDERS:
        raise ConfigError(f"unknown system {name!r}; choices: {sorted(_BUILDERS)}")
    builder = _BUILDERS[name]
    if name in ("linear_oscillator", "duffing") and kwargs:
        params = DUFFING if name == "duffing" else LINEAR_OSCILLATOR
        return make_oscillator(params, **kwargs)
    if kwargs:
        return builder(**kwargs)
    return builder()
