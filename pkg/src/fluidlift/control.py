"""Load wrench design, cable-force allocation and the thrust feedback.

The parallel/perpendicular split ``u_j = mu_j + nu_j + (feedforward)`` only
fixes the structure of the thrust. The PD laws and the pseudoinverse
allocation below are one admissible choice of ``mu_j`` and ``nu_j``.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import ClosedLoopInput, ControlInput
from .errors import DegenerateTension, DegenerateThrust, RankDeficientAllocation
from .manifold import E1, E2, E3, cross, hat, hat_batch, rotation_error

EPS_FORCE = 1e-6


@dataclass
class Gains:
    """Feedback gains, all normalised by mass or inertia."""
    K_x: float = 4.0
    K_v: float = 4.0
    K_R: float = 16.0
    K_Omega: float = 8.0
    k_q: float = 100.0
    k_omega: float = 20.0
    k_Rj: float = 40.0
    k_Omegaj: float = 12.0
    f_max: Optional[float] = None

    def __post_init__(self):
        for name in ("K_x", "K_v", "K_R", "K_Omega", "k_q", "k_omega", "k_Rj", "k_Omegaj"):
            if getattr(self, name) <= 0:
                raise ValueError(f"gain {name} must be positive")


@dataclass
class LoadReference:
    x_d: np.ndarray
    v_d: np.ndarray
    a_d: np.ndarray
    R_d: np.ndarray = field(default_factory=lambda: np.eye(3))
    Omega_d: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def hover(cls, x_d=(0.0, 0.0, 0.0)):
        return cls(np.asarray(x_d, dtype=float), np.zeros(3), np.zeros(3))


def desired_wrench(meas, ref, m_hat, mdot_hat, J_hat, Jdot_hat, gains, g=9.81):
    """Force (inertial) and moment (body) that invert the load dynamics."""
    e_x = meas.x_L - ref.x_d
    e_v = meas.v_L - ref.v_d
    F_d = m_hat * (ref.a_d + g * E3 - gains.K_x * e_x - gains.K_v * e_v) + mdot_hat * meas.v_L

    R, Rd, Om = meas.R_L, ref.R_d, meas.Omega_L
    e_R = rotation_error(R, Rd)
    e_Om = Om - R.T @ Rd @ ref.Omega_d
    M_d = (cross(Om, J_hat @ Om) + Jdot_hat @ Om
           + J_hat @ (-gains.K_R * e_R - gains.K_Omega * e_Om))
    return F_d, M_d


def allocation_matrix(R_L, r):
    r = np.asarray(r, dtype=float)
    n = r.shape[0]
    P = np.zeros((6, 3 * n))
    P[0:3] = np.tile(np.eye(3), n)
    P[3:6] = (hat_batch(r) @ R_L.T).transpose(1, 0, 2).reshape(3, 3 * n)
    return P


def body_allocation_pinv(r, rank_tol=1e-9):
    """Pseudoinverse of the allocation map at ``R_L = I``; raises when the layout has rank < 6."""
    U, s, Vt = np.linalg.svd(allocation_matrix(np.eye(3), r), full_matrices=False)
    if s[-1] <= rank_tol * s[0]:
        raise RankDeficientAllocation(f"allocation map has rank < 6 (sigma_min = {s[-1]:.3e})")
    return Vt.T @ (U.T / s[:, None])


def allocate_cable_forces(F_d, M_d, R_L, r, rank_tol=1e-9, pinv=None):
    """Minimum-norm cable forces on the load realising the wrench ``(F_d, M_d)``.

    ``P(R) = diag(R, I) P(I) blockdiag(R^T)`` with orthogonal outer factors,
    so the pseudoinverse at ``R_L = I`` (optionally precomputed) serves every attitude.
    """
    if pinv is None:
        pinv = body_allocation_pinv(r, rank_tol)
    F_body = pinv @ np.concatenate([F_d @ R_L, M_d])
    return F_body.reshape(-1, 3) @ R_L.T


def cable_setpoint_and_mu(F_j, q_j, eps=EPS_FORCE, hold=None):
    """Project a desired cable force onto the cable and derive the direction setpoint.

    With ``hold`` given, a degenerate force returns ``(0, hold)`` instead of
    raising.
    """
    F_j = np.asarray(F_j, dtype=float)
    nF = np.linalg.norm(F_j)
    if nF <= eps:
        if hold is None:
            raise DegenerateTension(f"desired cable force {nF:.3e} N below {eps:g} N")
        return np.zeros(3), hold
    mu = (q_j @ F_j) * q_j
    return mu, -F_j / nF


def cable_feedback_nu(q_j, omega_j, q_d, gains, m_Q, L=1.0):
    """Perpendicular thrust steering the cable toward ``q_d``.

    Gives ``omega_dot = k_q (q x q_d) - k_omega omega_perp`` under the
    closed-loop cable dynamics.
    """
    w_perp = omega_j - (q_j @ omega_j) * q_j
    a = gains.k_q * cross(q_j, q_d) - gains.k_omega * w_perp
    nu = m_Q * L * cross(q_j, a)
    return nu - (q_j @ nu) * q_j


def assemble_u(mu, nu, meas, Omega_dot_L, q, omega, params):
    """Thrust vectors implementing the feedback that decouples load and cables."""
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    R, Om = meas.R_L, meas.Omega_L
    Omh = hat(Om)
    lever = (Omh @ Omh + hat(Omega_dot_L)) @ params.r.T      # (3, n)
    w2 = np.einsum("ij,ij->i", omega, omega)
    return (mu + nu + params.m_Q * (meas.vdot_L + (R @ lever).T + params.g * E3)
            + params.m_Q * params.L * w2[:, None] * q)


def _desired_attitude(b3):
    b1 = E1 - (E1 @ b3) * b3
    if np.linalg.norm(b1) < 1e-6:
        b1 = E2 - (E2 @ b3) * b3
    b1 /= np.linalg.norm(b1)
    return np.column_stack([b1, cross(b3, b1), b3])


def quad_attitude_control(u_j, R_j, Omega_j, J_Q, gains, eps=EPS_FORCE):
    """Collective thrust and moment aligning the quadrotor thrust axis with ``u_j``."""
    nu = np.linalg.norm(u_j)
    if nu <= eps:
        raise DegenerateThrust(f"thrust vector norm {nu:.3e} N below {eps:g} N")
    Rd = _desired_attitude(u_j / nu)
    e_R = rotation_error(R_j, Rd)
    f = float(u_j @ R_j[:, 2])
    if gains.f_max is not None:
        f = min(f, gains.f_max)
    M = J_Q @ (-gains.k_Rj * e_R - gains.k_Omegaj * Omega_j) + cross(Omega_j, J_Q @ Omega_j)
    return f, M


def _rowdot(a, b):
    return np.einsum("ij,ij->i", a, b)


def cable_setpoints_batch(F, q, hold, eps=EPS_FORCE):
    """Row-wise :func:`cable_setpoint_and_mu` with held setpoints for degenerate rows."""
    nF = np.sqrt(_rowdot(F, F))
    ok = nF > eps
    mu = np.where(ok[:, None], _rowdot(q, F)[:, None] * q, 0.0)
    q_d = np.where(ok[:, None], -F / np.where(ok, nF, 1.0)[:, None], hold)
    return mu, q_d


def cable_feedback_batch(q, omega, q_d, gains, m_Q, L=1.0):
    """Row-wise :func:`cable_feedback_nu`."""
    w_perp = omega - _rowdot(q, omega)[:, None] * q
    a = gains.k_q * cross(q, q_d) - gains.k_omega * w_perp
    nu = m_Q * L * cross(q, a)
    return nu - _rowdot(q, nu)[:, None] * q


def quad_attitude_batch(u, R, Omega, J_Q, gains, eps=EPS_FORCE):
    """Row-wise :func:`quad_attitude_control`."""
    nu = np.sqrt(_rowdot(u, u))
    if np.any(nu <= eps):
        raise DegenerateThrust(f"thrust vector norm {nu.min():.3e} N below {eps:g} N")
    b3 = u / nu[:, None]
    b1 = E1 - b3[:, :1] * b3
    bad = np.sqrt(_rowdot(b1, b1)) < 1e-6
    if np.any(bad):
        b1[bad] = E2 - b3[bad, 1:2] * b3[bad]
    b1 /= np.sqrt(_rowdot(b1, b1))[:, None]
    Rd_T = np.empty(R.shape)
    Rd_T[:, 0], Rd_T[:, 1], Rd_T[:, 2] = b1, cross(b3, b1), b3
    E = Rd_T @ R
    e_R = np.empty(u.shape)
    e_R[:, 0] = E[:, 2, 1] - E[:, 1, 2]
    e_R[:, 1] = E[:, 0, 2] - E[:, 2, 0]
    e_R[:, 2] = E[:, 1, 0] - E[:, 0, 1]
    e_R *= 0.5
    f = _rowdot(u, R[:, :, 2])
    if gains.f_max is not None:
        f = np.minimum(f, gains.f_max)
    JO = Omega @ J_Q.T
    M = (-gains.k_Rj * e_R - gains.k_Omegaj * Omega) @ J_Q.T + cross(Omega, JO)
    return f, M


class LoadController:
    """Stateful wrapper: holds cable setpoints and the lagged load angular acceleration.

    One instance belongs to one simulation and is advanced once per step.
    """

    def __init__(self, params, gains=None):
        self.params = params
        self.gains = gains or Gains()
        self.q_hold = np.tile(-E3, (params.n, 1))
        self.Omega_dot_lag = np.zeros(3)
        self._pinv = None

    def compute(self, meas, ref, m_hat, mdot_hat, J_hat, Jdot_hat, state):
        p, g = self.params, self.gains
        F_d, M_d = desired_wrench(meas, ref, m_hat, mdot_hat, J_hat, Jdot_hat, g, p.g)
        if self._pinv is None:
            self._pinv = body_allocation_pinv(p.r)
        F = allocate_cable_forces(F_d, M_d, meas.R_L, p.r, pinv=self._pinv)
        mu, self.q_hold = cable_setpoints_batch(F, state.q, self.q_hold)
        nu = cable_feedback_batch(state.q, state.omega, self.q_hold, g, p.m_Q, p.L)
        u = assemble_u(mu, nu, meas, self.Omega_dot_lag, state.q, state.omega, p)
        f, M = quad_attitude_batch(u, state.R_Q, state.Omega_Q, p.J_Q, g)
        return ControlOutput(F_d=F_d, M_d=M_d, mu=mu, nu=nu, u=u, f=f, M=M)

    def observe(self, Omega_dot_L):
        self.Omega_dot_lag = np.asarray(Omega_dot_L, dtype=float).copy()


@dataclass
class ControlOutput:
    F_d: np.ndarray
    M_d: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    u: np.ndarray
    f: np.ndarray
    M: np.ndarray

    def closed_loop(self):
        return ClosedLoopInput(self.mu, self.nu, self.M)

    def full(self):
        return ControlInput(self.u, self.M)
