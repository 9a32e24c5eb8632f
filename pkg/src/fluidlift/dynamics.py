"""Reduced multi-quadrotor / variable-mass load dynamics.

Two right-hand sides are provided:

* :func:`full_derivatives` -- the coupled model in which the load, cable and
  quadrotor accelerations are implicitly linked through the cable
  constraint ``x_Qj = x_L + R_L r_j - L q_j``. It is solved as one dense
  linear system of size ``6 + 3N`` per evaluation.
* :func:`closed_loop_derivatives` -- the model obtained after the thrust
  feedback of :func:`fluidlift.control.assemble_u`, where the load is driven
  by the cable-parallel forces ``mu_j`` and each cable by ``nu_j``.

:func:`step` advances either model with classical RK4 on the vector states
and Runge-Kutta-Munthe-Kaas increments on SO(3) and S^2.
"""
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import SingularInertia, SingularMassMatrix
from .manifold import (
    cross,
    E3,
    dexpinv_batch,
    exp_rotation,
    exp_rotation_batch,
    hat,
    hat_batch,
    reorthonormalize,
)

GRAVITY = 9.81
MAX_COND = 1e12


def constant_schedule(value):
    value = np.asarray(value, dtype=float) if np.ndim(value) else float(value)
    zero = np.zeros_like(value) if np.ndim(value) else 0.0
    return lambda t: (value, zero)


def viscous_mass_schedule(m0, lam):
    return lambda t: (m0 * np.exp(-lam * t), -lam * m0 * np.exp(-lam * t))


def orifice_mass_schedule(m0, lam):
    def sched(t):
        s = np.sqrt(m0) - np.sqrt(lam) * t
        if s <= 0:
            return 0.0, 0.0
        return s * s, -2.0 * np.sqrt(lam) * s
    return sched


def scaled_inertia_schedule(J0, mass_schedule, m_ref):
    """Inertia proportional to the load mass: ``J(t) = J0 m(t) / m_ref``."""
    J0 = np.asarray(J0, dtype=float)

    def sched(t):
        m, mdot = mass_schedule(t)
        return J0 * (m / m_ref), J0 * (mdot / m_ref)
    return sched


def square_layout(n=4, side=0.8, z=0.0):
    """Attachment offsets evenly spaced on a circle; n=4 gives a square of ``side``."""
    radius = side / np.sqrt(2.0)
    ang = np.pi / 4 + 2 * np.pi * np.arange(n) / n
    return np.column_stack([radius * np.cos(ang), radius * np.sin(ang), np.full(n, z)])


@dataclass
class SystemParams:
    n: int
    m_Q: float
    J_Q: np.ndarray
    L: float
    r: np.ndarray
    mass_schedule: Callable
    inertia_schedule: Callable
    g: float = GRAVITY

    def __post_init__(self):
        self.J_Q = np.asarray(self.J_Q, dtype=float)
        self.r = np.asarray(self.r, dtype=float).reshape(self.n, 3)
        if self.n < 1 or self.m_Q <= 0 or self.L <= 0:
            raise ValueError("need n >= 1, m_Q > 0 and L > 0")
        if not np.allclose(self.J_Q, self.J_Q.T) or np.min(np.linalg.eigvalsh(self.J_Q)) <= 0:
            raise ValueError("J_Q must be symmetric positive-definite")
        self.J_Q_inv = np.linalg.inv(self.J_Q)
        self.r_hat = hat_batch(self.r)


@dataclass
class SystemState:
    x_L: np.ndarray
    v_L: np.ndarray
    R_L: np.ndarray
    Omega_L: np.ndarray
    q: np.ndarray          # (N, 3) cable directions, quadrotor -> load
    omega: np.ndarray      # (N, 3) cable angular velocities
    R_Q: np.ndarray        # (N, 3, 3) quadrotor attitudes
    Omega_Q: np.ndarray    # (N, 3) quadrotor body rates
    t: float = 0.0

    @property
    def n(self):
        return self.q.shape[0]

    def quad_positions(self, params):
        return self.x_L + self.r_world(params) - params.L * self.q

    def r_world(self, params):
        return params.r @ self.R_L.T

    def copy(self):
        return SystemState(self.x_L.copy(), self.v_L.copy(), self.R_L.copy(), self.Omega_L.copy(),
                           self.q.copy(), self.omega.copy(), self.R_Q.copy(), self.Omega_Q.copy(), self.t)


def hover_state(n, x_L=(0.0, 0.0, 0.0)):
    """Load at rest, cables vertical below their quadrotors, level quadrotors."""
    return SystemState(
        x_L=np.array(x_L, dtype=float),
        v_L=np.zeros(3),
        R_L=np.eye(3),
        Omega_L=np.zeros(3),
        q=np.tile(-E3, (n, 1)),
        omega=np.zeros((n, 3)),
        R_Q=np.tile(np.eye(3), (n, 1, 1)),
        Omega_Q=np.zeros((n, 3)),
    )


@dataclass
class ControlInput:
    """Inertial-frame thrust vectors ``u_j`` and quadrotor moments ``M_j``."""
    u: np.ndarray
    M: np.ndarray


@dataclass
class ClosedLoopInput:
    """Cable-parallel ``mu_j``, cable-perpendicular ``nu_j`` and moments ``M_j``."""
    mu: np.ndarray
    nu: np.ndarray
    M: np.ndarray

    def check_orthogonality(self, q, tol=1e-9):
        par = np.einsum("ij,ij->i", q, self.nu)
        if np.any(np.abs(par) > tol * np.maximum(np.linalg.norm(self.nu, axis=1), 1e-300)):
            raise ValueError("nu_j must be perpendicular to q_j")
        perp = self.mu - np.einsum("ij,ij->i", q, self.mu)[:, None] * q
        if np.any(np.linalg.norm(perp, axis=1) > tol * np.maximum(np.linalg.norm(self.mu, axis=1), 1e-300)):
            raise ValueError("mu_j must be parallel to q_j")


def wind_force(t, amplitude=0.3):
    """Smooth wind force in newtons acting on the load."""
    return amplitude * np.array([np.sin(0.4 * t), np.cos(0.6 * t), np.sin(0.8 * t)])


# frequencies (rad/s) and phases of the deterministic sensor perturbations
NOISE_FREQS = {
    "position": [1.3, 1.7, 2.3],
    "velocity": [1.9, 2.9, 3.7],
    "acceleration": [2.1, 3.1, 4.1],
    "attitude": [0.9, 1.1, 1.5],
    "rate": [1.2, 1.6, 2.0],
}
NOISE_PHASES = {
    "position": [0.0, 1.0, 2.0],
    "velocity": [0.5, 1.5, 2.5],
    "acceleration": [0.3, 1.3, 2.3],
    "attitude": [0.2, 1.2, 2.2],
    "rate": [0.7, 1.7, 2.7],
}


@dataclass
class Disturbance:
    wind: Optional[Callable] = None
    position_amp: float = 0.0
    velocity_amp: float = 0.0
    acceleration_amp: float = 0.0
    attitude_amp: float = 0.0
    rate_amp: float = 0.0
    freqs: dict = field(default_factory=lambda: {k: list(v) for k, v in NOISE_FREQS.items()})
    phases: dict = field(default_factory=lambda: {k: list(v) for k, v in NOISE_PHASES.items()})

    def __post_init__(self):
        for name in ("position_amp", "velocity_amp", "acceleration_amp", "attitude_amp", "rate_amp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def wind_at(self, t):
        return np.zeros(3) if self.wind is None else np.asarray(self.wind(t), dtype=float)

    def signal(self, channel, t):
        w = np.asarray(self.freqs[channel])
        p = np.asarray(self.phases[channel])
        return np.sin(w * t + p)


@dataclass
class Measurement:
    x_L: np.ndarray
    v_L: np.ndarray
    vdot_L: np.ndarray
    R_L: np.ndarray
    Omega_L: np.ndarray
    t: float


def measure(state, dist, t, vdot_L):
    """Sensor bundle: true load state plus smooth sinusoidal perturbations."""
    return Measurement(
        x_L=state.x_L + dist.position_amp * dist.signal("position", t),
        v_L=state.v_L + dist.velocity_amp * dist.signal("velocity", t),
        vdot_L=np.asarray(vdot_L, dtype=float) + dist.acceleration_amp * dist.signal("acceleration", t),
        R_L=state.R_L @ exp_rotation(dist.attitude_amp * dist.signal("attitude", t)),
        Omega_L=state.Omega_L + dist.rate_amp * dist.signal("rate", t),
        t=t,
    )


@dataclass
class StateDerivative:
    """Time derivative of a :class:`SystemState`.

    Manifold components are represented by their generating rates: body rate
    ``Omega_L`` for ``R_L``, spatial rate ``omega_j`` for ``q_j`` and body rate
    ``Omega_Q`` for ``R_Q``.
    """
    x_dot: np.ndarray
    v_dot: np.ndarray
    Omega_L_dot: np.ndarray
    q_dot: np.ndarray
    omega_dot: np.ndarray
    Omega_Q_dot: np.ndarray
    R_L_rate: np.ndarray
    q_rate: np.ndarray
    R_Q_rate: np.ndarray


def _quad_attitude_accel(state, M, params):
    gyro = cross(state.Omega_Q @ params.J_Q.T, state.Omega_Q)
    return (gyro + M) @ params.J_Q_inv.T


def _derivative(state, v_dot, Om_dot, w_dot, OmQ_dot):
    return StateDerivative(
        x_dot=state.v_L, v_dot=v_dot, Omega_L_dot=Om_dot,
        q_dot=cross(state.omega, state.q), omega_dot=w_dot, Omega_Q_dot=OmQ_dot,
        R_L_rate=state.Omega_L, q_rate=state.omega, R_Q_rate=state.Omega_Q,
    )


def effective_inertia(J_L, params):
    return J_L - params.m_Q * np.einsum("nij,njk->ik", params.r_hat, params.r_hat)


def _full_system(state, u, params, dist):
    """Assemble ``A z = b`` for z = (v_dot, Omega_dot, omega_dot_1..N)."""
    n, mQ, L, g = params.n, params.m_Q, params.L, params.g
    t = state.t
    m_L, m_dot = params.mass_schedule(t)
    J_L, J_dot = params.inertia_schedule(t)
    R = state.R_L
    Om = state.Omega_L
    Omh = hat(Om)
    m_eff = n * mQ + m_L
    J_eff = effective_inertia(J_L, params)

    rh = params.r_hat                          # (n,3,3)
    R_rh = R @ rh                               # R r_hat_j
    qh = hat_batch(state.q)
    w2 = np.einsum("ij,ij->i", state.omega, state.omega)
    cent = (Omh @ Omh @ params.r.T).T @ R.T     # R Om^2 r_j, (n,3)
    RT = R.T
    rRT = rh @ RT                               # r_hat_j R^T

    size = 6 + 3 * n
    A = np.zeros((size, size))
    b = np.zeros(size)

    # translational balance
    A[0:3, 0:3] = m_eff * np.eye(3)
    A[0:3, 3:6] = -mQ * R_rh.sum(axis=0)
    for j in range(n):
        A[0:3, 6 + 3 * j:9 + 3 * j] = mQ * L * qh[j]
    b[0:3] = (u.sum(axis=0) - mQ * cent.sum(axis=0) - mQ * L * (w2[:, None] * state.q).sum(axis=0)
              - m_eff * g * E3 - m_dot * state.v_L + dist.wind_at(t))

    # rotational balance
    A[3:6, 0:3] = mQ * rRT.sum(axis=0)
    A[3:6, 3:6] = J_eff
    for j in range(n):
        A[3:6, 6 + 3 * j:9 + 3 * j] = mQ * L * rRT[j] @ qh[j]
    forcing = -g * E3 - L * w2[:, None] * state.q + u / mQ
    b[3:6] = (-Omh @ J_eff @ Om - J_dot @ Om + mQ * np.einsum("nij,nj->i", rRT, forcing))

    # cable dynamics
    for j in range(n):
        rows = slice(6 + 3 * j, 9 + 3 * j)
        A[rows, rows] = L * np.eye(3)
        A[rows, 0:3] = -qh[j]
        A[rows, 3:6] = qh[j] @ R_rh[j]
        b[rows] = qh[j] @ (cent[j] + g * E3 - u[j] / mQ)
    return A, b


def full_derivatives(state, inputs, params, dist):
    """Right-hand side of the coupled model for inertial thrust vectors ``u_j``."""
    A, b = _full_system(state, np.asarray(inputs.u, dtype=float), params, dist)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > MAX_COND:
        raise SingularMassMatrix(f"coupled mass matrix condition number {cond:.3e}")
    z = np.linalg.solve(A, b)
    n = params.n
    OmQ_dot = _quad_attitude_accel(state, np.asarray(inputs.M, dtype=float), params)
    return _derivative(state, z[0:3], z[3:6], z[6:].reshape(n, 3), OmQ_dot)


def full_residual(state, inputs, params, dist, deriv):
    """Residuals of the translational, rotational and cable balances for ``deriv``.

    Returned as ``(residual, scale)`` so callers can form relative errors.
    """
    A, b = _full_system(state, np.asarray(inputs.u, dtype=float), params, dist)
    z = np.concatenate([deriv.v_dot, deriv.Omega_L_dot, deriv.omega_dot.ravel()])
    return A @ z - b, np.abs(A) @ np.abs(z) + np.abs(b)


def _solve3(A, b):
    """Solve a 3x3 system by the adjugate; raises SingularInertia when ``A`` is singular."""
    (a, b_, c), (d, e, f), (g, h, i) = A.tolist()
    x, y, z = b.tolist()
    c0, c1, c2 = e * i - f * h, f * g - d * i, d * h - e * g
    det = a * c0 + b_ * c1 + c * c2
    scale = max(abs(a), abs(b_), abs(c), abs(d), abs(e), abs(f), abs(g), abs(h), abs(i)) ** 3
    if not math.isfinite(det) or abs(det) <= 1e-14 * scale:
        raise SingularInertia("load inertia is singular")
    # rows of the adjugate are the cofactor columns
    return np.array([
        c0 * x + (c * h - b_ * i) * y + (b_ * f - c * e) * z,
        c1 * x + (a * i - c * g) * y + (c * d - a * f) * z,
        c2 * x + (b_ * g - a * h) * y + (a * e - b_ * d) * z,
    ]) / det


def closed_loop_derivatives(state, mu, nu, M, params, dist):
    """Right-hand side after the thrust feedback has cancelled the coupling."""
    t = state.t
    m_L, m_dot = params.mass_schedule(t)
    J_L, J_dot = params.inertia_schedule(t)
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    v_dot = (mu.sum(axis=0) + dist.wind_at(t) - m_dot * state.v_L) / m_L - params.g * E3

    Om = state.Omega_L
    torque = np.einsum("nij,nj->i", params.r_hat, mu @ state.R_L)
    Om_dot = _solve3(J_L, torque - cross(Om, J_L @ Om) - J_dot @ Om)
    w_dot = -cross(state.q, nu) / (params.m_Q * params.L)
    OmQ_dot = _quad_attitude_accel(state, np.asarray(M, dtype=float), params)
    return _derivative(state, v_dot, Om_dot, w_dot, OmQ_dot)


def load_accelerations(state, inputs, params, dist):
    """``(v_dot, Omega_L_dot)`` only; the cheap path for acceleration measurements."""
    if not isinstance(inputs, ClosedLoopInput):
        d = full_derivatives(state, inputs, params, dist)
        return d.v_dot, d.Omega_L_dot
    t = state.t
    m_L, m_dot = params.mass_schedule(t)
    J_L, J_dot = params.inertia_schedule(t)
    mu = np.asarray(inputs.mu, dtype=float)
    v_dot = (mu.sum(axis=0) + dist.wind_at(t) - m_dot * state.v_L) / m_L - params.g * E3
    Om = state.Omega_L
    torque = np.einsum("nij,nj->i", params.r_hat, mu @ state.R_L)
    return v_dot, _solve3(J_L, torque - cross(Om, J_L @ Om) - J_dot @ Om)


def derivatives(state, inputs, params, dist):
    if isinstance(inputs, ClosedLoopInput):
        return closed_loop_derivatives(state, inputs.mu, inputs.nu, inputs.M, params, dist)
    return full_derivatives(state, inputs, params, dist)


def _pack(d):
    """Flat vector rates and the (1 + 2N, 3) stack of Lie-algebra rates."""
    vec = np.concatenate([d.x_dot, d.v_dot, d.Omega_L_dot, d.omega_dot.ravel(), d.Omega_Q_dot.ravel()])
    rot = np.concatenate([d.R_L_rate[None, :], d.q_rate, d.R_Q_rate])
    return vec, rot


def _offset_state(base, dt, vec, rot):
    """State at ``base`` displaced by packed vector and Lie-algebra increments."""
    n = base.n
    Ex = exp_rotation_batch(rot)
    w = vec[9:].reshape(2 * n, 3)
    return SystemState(
        x_L=base.x_L + vec[0:3], v_L=base.v_L + vec[3:6], R_L=base.R_L @ Ex[0],
        Omega_L=base.Omega_L + vec[6:9],
        q=np.einsum("nij,nj->ni", Ex[1:1 + n], base.q), omega=base.omega + w[:n],
        R_Q=base.R_Q @ Ex[1 + n:], Omega_Q=base.Omega_Q + w[n:],
        t=base.t + dt,
    )


def step(state, controller, params, dist, dt, return_derivative=False):
    """Advance one RK4 step.

    ``controller(t, state)`` returns a :class:`ControlInput` or
    :class:`ClosedLoopInput`; it is evaluated at every stage, so a callback
    returning a fixed object gives a zero-order hold over the step.
    Vector states use classical RK4; ``R_L``, ``q_j`` and ``R_Qj`` are moved by
    exponentials of stage-combined Lie-algebra increments (RKMK4).
    """
    if not 0 < dt <= 0.05:
        raise ValueError("dt must lie in (0, 0.05]")
    n = state.n
    # R_L and R_Qj are body-frame (right) increments, q_j a left one
    sign = np.ones((1 + 2 * n, 1))
    sign[0] = -1.0
    sign[1 + n:] = -1.0

    d1 = derivatives(state, controller(state.t, state), params, dist)
    # dexp^{-1} at a zero increment is the identity
    kv1, kr1 = _pack(d1)

    def advance(kv, kr, h):
        vec, rot = h * kv, h * kr
        s = _offset_state(state, h, vec, rot)
        d = derivatives(s, controller(s.t, s), params, dist)
        kv_s, kr_s = _pack(d)
        return kv_s, dexpinv_batch(sign * rot, kr_s)

    kv2, kr2 = advance(kv1, kr1, dt / 2)
    kv3, kr3 = advance(kv2, kr2, dt / 2)
    kv4, kr4 = advance(kv3, kr3, dt)

    vec = dt / 6 * (kv1 + 2 * (kv2 + kv3) + kv4)
    rot = dt / 6 * (kr1 + 2 * (kr2 + kr3) + kr4)

    Ex = exp_rotation_batch(rot)
    q_new = np.einsum("nij,nj->ni", Ex[1:1 + n], state.q)
    q_new /= np.sqrt(np.einsum("ij,ij->i", q_new, q_new))[:, None]
    w = vec[9:].reshape(2 * n, 3)
    omega_new = state.omega + w[:n]
    # q . omega is a first integral of the cable kinematics
    omega_new -= np.einsum("ij,ij->i", omega_new, q_new)[:, None] * q_new
    Rs = np.concatenate([(state.R_L @ Ex[0])[None], state.R_Q @ Ex[1 + n:]])
    Rs = reorthonormalize(Rs)
    new = SystemState(
        x_L=state.x_L + vec[0:3], v_L=state.v_L + vec[3:6],
        R_L=Rs[0], Omega_L=state.Omega_L + vec[6:9],
        q=q_new, omega=omega_new,
        R_Q=Rs[1:], Omega_Q=state.Omega_Q + w[n:],
        t=state.t + dt,
    )
    if return_derivative:
        return new, d1
    return new


def manifold_defect(state):
    """Largest violation of the rotation and unit-norm invariants."""
    err = np.linalg.norm(state.R_L.T @ state.R_L - np.eye(3))
    err = max(err, abs(np.linalg.det(state.R_L) - 1.0))
    err = max(err, np.max(np.abs(np.linalg.norm(state.q, axis=1) - 1.0)))
    RtR = np.einsum("nji,njk->nik", state.R_Q, state.R_Q)
    err = max(err, np.max(np.linalg.norm(RtR - np.eye(3), axis=(1, 2))))
    return err


__all__ = [
    "SystemParams", "SystemState", "ControlInput", "ClosedLoopInput", "Disturbance", "Measurement",
    "StateDerivative", "full_derivatives", "full_residual", "closed_loop_derivatives", "derivatives",
    "load_accelerations", "step", "wind_force", "measure", "hover_state", "square_layout", "constant_schedule",
    "viscous_mass_schedule", "orifice_mass_schedule", "scaled_inertia_schedule", "effective_inertia",
    "manifold_defect",
]
