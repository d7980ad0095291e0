"""Pendulum-on-actuator mechanics: nonlinear equations of motion and
linearizations for both actuation paradigms.

The plant is a pivoted actuator rod (carrying the magnet stack) with an
inverted pendulum balanced on top of it.  Planar motion is described by the
actuator tilt (alpha) and the pendulum tilt (phi); the full 3D plant is two
such planar systems, one per tilt direction, coupled only through the shared
magnetics.

Two actuation paradigms are supported:

* ``field``: the input is the commanded field angle u_alpha; the magnetic
  torque on the actuator is |m||b| sin(u_alpha - alpha).
* ``torque``: the input is the torque applied to the actuator directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm

PARADIGMS = ("field", "torque")


@dataclass(frozen=True)
class PendulumParams:
    """Physical parameters of the actuator/pendulum plant.

    Attributes:
        pend_mass: Pendulum mass M [kg].
        arm_length: Pivot-to-pendulum-support distance l [m].
        pend_length: Pendulum length L [m] (uniform rod, mass at centroid L/2).
        magnet_offset: Pivot-to-magnet-center distance l_m [m].
        eta: Actuator first mass moment about the pivot [kg·m].
        inertia: Actuator moment of inertia about the pivot J [kg·m²].
        gravity: Gravitational acceleration [m/s²].
        dipole_magnitude: Magnet dipole moment |m| [A·m²].
        damping: Viscous damping coefficient applied per joint [N·m·s/rad].
    """

    pend_mass: float = 0.02
    arm_length: float = 0.10
    pend_length: float = 0.20
    magnet_offset: float = 0.05
    eta: float = 0.01
    inertia: float = 5.0e-4
    gravity: float = 9.81
    dipole_magnitude: float = 0.5
    damping: float = 0.0

    def __post_init__(self) -> None:
        positive = (
            "pend_mass",
            "arm_length",
            "pend_length",
            "magnet_offset",
            "eta",
            "inertia",
            "gravity",
            "dipole_magnitude",
        )
        for name in positive:
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if self.damping < 0.0:
            raise ValueError("damping must be non-negative")

    def with_updates(self, **kwargs) -> "PendulumParams":
        return replace(self, **kwargs)


@dataclass
class PendulumState:
    """Planar state: actuator tilt, pendulum tilt, and their rates [rad, rad/s]."""

    alpha: float = 0.0
    phi: float = 0.0
    alpha_dot: float = 0.0
    phi_dot: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.phi, self.alpha_dot, self.phi_dot])

    @classmethod
    def from_array(cls, x: np.ndarray) -> "PendulumState":
        return cls(alpha=float(x[0]), phi=float(x[1]), alpha_dot=float(x[2]), phi_dot=float(x[3]))


def _check_paradigm(paradigm: str) -> None:
    if paradigm not in PARADIGMS:
        raise ValueError(f"paradigm must be one of {PARADIGMS}, got '{paradigm}'")


# ---------------------------------------------------------------------------
# Actuator-only equations of motion (no pendulum attached)
# ---------------------------------------------------------------------------


def eom_actuator_field(
    params: PendulumParams,
    alpha: float,
    alpha_dot: float,
    u_alpha: float,
    b_mag: float,
) -> float:
    """Actuator-only angular acceleration under field-angle actuation.

    J a'' = eta g sin(a) + |m||b| sin(u_a - a) - d a'.
    The upright equilibrium is stable iff |m||b| > eta g.
    """
    p = params
    torque = (
        p.eta * p.gravity * math.sin(alpha)
        + p.dipole_magnitude * b_mag * math.sin(u_alpha - alpha)
        - p.damping * alpha_dot
    )
    return torque / p.inertia


def eom_actuator_torque(
    params: PendulumParams, alpha: float, alpha_dot: float, tau: float
) -> float:
    """Actuator-only angular acceleration under direct torque actuation.

    J a'' = eta g sin(a) + tau - d a'.
    """
    p = params
    return (p.eta * p.gravity * math.sin(alpha) + tau - p.damping * alpha_dot) / p.inertia


def eom_field_with_gradients(
    params: PendulumParams,
    alpha: float,
    alpha_dot: float,
    u_alpha: float,
    b_mag: float,
    u_xy: float,
    u_yx: float,
) -> float:
    """Linearized actuator acceleration with field-gradient force inputs.

    Small-angle model (valid for |alpha| < 0.2 rad; outside that range it is
    only an approximation of the nonlinear plant):

        J a'' + d a' + (|m||b| - eta g) a
            = |m||b| u_a + l_m |m| u_xy + l_m |m| u_yx

    The two gradient inputs enter symmetrically: a transverse force on the
    magnet at lever arm l_m is indistinguishable from extra field torque.
    """
    p = params
    mb = p.dipole_magnitude * b_mag
    stiffness = mb - p.eta * p.gravity
    drive = mb * u_alpha + p.magnet_offset * p.dipole_magnitude * (u_xy + u_yx)
    return (drive - p.damping * alpha_dot - stiffness * alpha) / p.inertia


# ---------------------------------------------------------------------------
# Coupled actuator + pendulum equations of motion
# ---------------------------------------------------------------------------


def _coupled_accelerations(
    params: PendulumParams,
    alpha: float,
    phi: float,
    alpha_dot: float,
    phi_dot: float,
    q_alpha: float,
) -> tuple[float, float]:
    """Solve the 2x2 coupled dynamics for (alpha'', phi'').

    q_alpha is the generalized force on the actuator joint (magnetic torque
    plus any disturbance); the pendulum joint is unactuated.
    """
    p = params
    m_pend = p.pend_mass
    half_ml_l = 0.5 * m_pend * p.arm_length * p.pend_length
    c = math.cos(alpha - phi)
    s = math.sin(alpha - phi)

    a11 = p.inertia + m_pend * p.arm_length**2
    a12 = half_ml_l * c
    a22 = 0.25 * m_pend * p.pend_length**2

    rhs1 = (
        (p.eta + m_pend * p.arm_length) * p.gravity * math.sin(alpha)
        - half_ml_l * phi_dot**2 * s
        + q_alpha
        - p.damping * alpha_dot
    )
    rhs2 = (
        m_pend * p.gravity * 0.5 * p.pend_length * math.sin(phi)
        + half_ml_l * alpha_dot**2 * s
        - p.damping * phi_dot
    )

    det = a11 * a22 - a12 * a12
    alpha_dd = (a22 * rhs1 - a12 * rhs2) / det
    phi_dd = (a11 * rhs2 - a12 * rhs1) / det
    return alpha_dd, phi_dd


def generalized_force(
    params: PendulumParams,
    alpha: float,
    paradigm: str,
    u: float,
    b_mag: float = 0.0,
) -> float:
    """Magnetic generalized force on the actuator joint for a planar model."""
    _check_paradigm(paradigm)
    if paradigm == "torque":
        return u
    return params.dipole_magnitude * b_mag * math.sin(u - alpha)


def eom_pendulum_coupled(
    params: PendulumParams,
    state: PendulumState,
    paradigm: str,
    u: float,
    b_mag: float = 0.0,
    disturbance_torque: float = 0.0,
) -> tuple[float, float]:
    """Full nonlinear planar accelerations (alpha'', phi'').

    Args:
        params: Plant parameters.
        state: Current planar state.
        paradigm: "field" (u is the field angle, b_mag required) or
            "torque" (u is the applied torque).
        u: Control input in the paradigm's units.
        b_mag: Field magnitude [T], used by the field paradigm.
        disturbance_torque: Additional constant torque on the actuator joint.
    """
    q_alpha = (
        generalized_force(params, state.alpha, paradigm, u, b_mag)
        + disturbance_torque
    )
    return _coupled_accelerations(
        params, state.alpha, state.phi, state.alpha_dot, state.phi_dot, q_alpha
    )


def total_energy(params: PendulumParams, state: PendulumState) -> float:
    """Mechanical energy of the unforced coupled plant (kinetic + potential)."""
    p = params
    m_pend = p.pend_mass
    t_kin = (
        0.5 * (p.inertia + m_pend * p.arm_length**2) * state.alpha_dot**2
        + 0.125 * m_pend * p.pend_length**2 * state.phi_dot**2
        + 0.5
        * m_pend
        * p.arm_length
        * p.pend_length
        * state.alpha_dot
        * state.phi_dot
        * math.cos(state.alpha - state.phi)
    )
    u_pot = (p.eta + m_pend * p.arm_length) * p.gravity * math.cos(state.alpha) + (
        m_pend * p.gravity * 0.5 * p.pend_length * math.cos(state.phi)
    )
    return t_kin + u_pot


# ---------------------------------------------------------------------------
# Linearization and discretization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearSystem:
    """Continuous-time linear model with its zero-order-hold discretization."""

    a: np.ndarray
    b: np.ndarray
    a_d: np.ndarray
    b_d: np.ndarray
    sample_time: float


def discretize(a: np.ndarray, b: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization via the augmented matrix exponential."""
    n = a.shape[0]
    m = b.shape[1]
    block = np.zeros((n + m, n + m))
    block[:n, :n] = a
    block[:n, n:] = b
    phi = expm(block * dt)
    return phi[:n, :n], phi[:n, n:]


def linearize(
    params: PendulumParams,
    paradigm: str,
    b_mag: float = 0.0,
    sample_time: float = 0.005,
) -> LinearSystem:
    """Linearize the coupled plant about the upright equilibrium.

    State order: (alpha, phi, alpha_dot, phi_dot); single input (torque or
    field angle depending on the paradigm).
    """
    _check_paradigm(paradigm)
    if sample_time <= 0.0:
        raise ValueError("sample_time must be strictly positive")
    p = params
    m_pend = p.pend_mass
    mass = np.array(
        [
            [p.inertia + m_pend * p.arm_length**2, 0.5 * m_pend * p.arm_length * p.pend_length],
            [0.5 * m_pend * p.arm_length * p.pend_length, 0.25 * m_pend * p.pend_length**2],
        ]
    )
    stiff = np.diag(
        [
            (p.eta + m_pend * p.arm_length) * p.gravity,
            m_pend * p.gravity * 0.5 * p.pend_length,
        ]
    )
    if paradigm == "field":
        mb = p.dipole_magnitude * b_mag
        stiff[0, 0] -= mb
        force = np.array([[mb], [0.0]])
    else:
        force = np.array([[1.0], [0.0]])

    mass_inv = np.linalg.inv(mass)
    a = np.zeros((4, 4))
    a[0:2, 2:4] = np.eye(2)
    a[2:4, 0:2] = mass_inv @ stiff
    a[2:4, 2:4] = -p.damping * mass_inv
    b = np.zeros((4, 1))
    b[2:4, :] = mass_inv @ force

    a_d, b_d = discretize(a, b, sample_time)
    return LinearSystem(a=a, b=b, a_d=a_d, b_d=b_d, sample_time=sample_time)


def linearize_actuator(
    params: PendulumParams,
    paradigm: str,
    b_mag: float = 0.0,
    sample_time: float = 0.005,
) -> LinearSystem:
    """Linearize the actuator-only plant (no pendulum) about upright.

    State order: (alpha, alpha_dot).  For the field paradigm the stiffness
    entry is (eta g - |m||b|) / J: negative stiffness, i.e. open-loop
    stability, requires |m||b| > eta g.
    """
    _check_paradigm(paradigm)
    p = params
    if paradigm == "field":
        mb = p.dipole_magnitude * b_mag
        stiffness = p.eta * p.gravity - mb
        gain = mb
    else:
        stiffness = p.eta * p.gravity
        gain = 1.0
    a = np.array([[0.0, 1.0], [stiffness / p.inertia, -p.damping / p.inertia]])
    b = np.array([[0.0], [gain / p.inertia]])
    a_d, b_d = discretize(a, b, sample_time)
    return LinearSystem(a=a, b=b, a_d=a_d, b_d=b_d, sample_time=sample_time)


def finite_difference_linearization(
    params: PendulumParams,
    paradigm: str,
    b_mag: float = 0.0,
    eps: float = 1.0e-6,
) -> tuple[np.ndarray, np.ndarray]:
    """Central finite-difference Jacobians of the nonlinear coupled plant.

    Independent cross-check of :func:`linearize`; returns (A, B) evaluated at
    the upright equilibrium with zero input.
    """
    _check_paradigm(paradigm)

    def f(x: np.ndarray, u: float) -> np.ndarray:
        state = PendulumState.from_array(x)
        add, pdd = eom_pendulum_coupled(params, state, paradigm, u, b_mag)
        return np.array([state.alpha_dot, state.phi_dot, add, pdd])

    x0 = np.zeros(4)
    a = np.zeros((4, 4))
    for j in range(4):
        dx = np.zeros(4)
        dx[j] = eps
        a[:, j] = (f(x0 + dx, 0.0) - f(x0 - dx, 0.0)) / (2.0 * eps)
    b = ((f(x0, eps) - f(x0, -eps)) / (2.0 * eps)).reshape(4, 1)
    return a, b


# ---------------------------------------------------------------------------
# Fixed-step integrator
# ---------------------------------------------------------------------------


def rk4_step(f, y: np.ndarray, t: float, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step of y' = f(t, y)."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
