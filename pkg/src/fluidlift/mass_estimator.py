"""Online gradient-descent estimation of a parametric load mass.

The regression residual is ``sum(mu_j) - m(t) w_L - mdot(t) v_L`` with
``w_L = v_dot_L + g e3``. Each parameter follows the instantaneous gradient
of half the squared residual, scaled by its own learning rate.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import HypothesisUnmet

MIN_MASS = 0.01


class MassModel:
    """Parametric mass ``m_theta(t)`` with analytic time and parameter derivatives."""

    kind = "custom"
    k = 1
    param_names = ("m0",)

    def mass(self, theta, t):
        raise NotImplementedError

    def rate(self, theta, t):
        raise NotImplementedError

    def accel(self, theta, t):
        raise NotImplementedError

    def grad_mass(self, theta, t):
        raise NotImplementedError

    def grad_rate(self, theta, t):
        raise NotImplementedError

    def project(self, theta, t, min_mass=MIN_MASS):
        return np.asarray(theta, dtype=float)


class ConstantMass(MassModel):
    kind = "constant"
    k = 1
    param_names = ("m0",)

    def mass(self, theta, t):
        return float(theta[0])

    def rate(self, theta, t):
        return 0.0

    def accel(self, theta, t):
        return 0.0

    def grad_mass(self, theta, t):
        return np.ones(1)

    def grad_rate(self, theta, t):
        return np.zeros(1)

    def project(self, theta, t, min_mass=MIN_MASS):
        return np.array([max(float(theta[0]), min_mass)])


class ViscousLeak(MassModel):
    """``m(t) = m0 exp(-lam t)``."""

    kind = "viscous"
    k = 2
    param_names = ("m0", "lam")

    def mass(self, theta, t):
        m0, lam = theta
        return m0 * np.exp(-lam * t)

    def rate(self, theta, t):
        m0, lam = theta
        return -lam * m0 * np.exp(-lam * t)

    def accel(self, theta, t):
        m0, lam = theta
        return lam * lam * m0 * np.exp(-lam * t)

    def grad_mass(self, theta, t):
        m0, lam = theta
        e = np.exp(-lam * t)
        return np.array([e, -t * m0 * e])

    def grad_rate(self, theta, t):
        m0, lam = theta
        e = np.exp(-lam * t)
        return np.array([-lam * e, m0 * e * (lam * t - 1.0)])

    def project(self, theta, t, min_mass=MIN_MASS):
        m0, lam = float(theta[0]), max(float(theta[1]), 0.0)
        m0 = max(m0, min_mass * np.exp(lam * t))
        return np.array([m0, lam])


class OrificeLeak(MassModel):
    """``m(t) = (sqrt(m0) - sqrt(lam) t)^2``, clamped to zero once drained.

    After depletion the mass, its rate and all gradients are frozen at zero.
    """

    kind = "orifice"
    k = 2
    param_names = ("m0", "lam")
    min_lam = 1e-8

    def _s(self, theta, t):
        m0, lam = theta
        return np.sqrt(m0) - np.sqrt(lam) * t

    def mass(self, theta, t):
        s = self._s(theta, t)
        return s * s if s > 0 else 0.0

    def rate(self, theta, t):
        s = self._s(theta, t)
        return -2.0 * np.sqrt(theta[1]) * s if s > 0 else 0.0

    def accel(self, theta, t):
        return 2.0 * theta[1] if self._s(theta, t) > 0 else 0.0

    def grad_mass(self, theta, t):
        m0, lam = theta
        s = self._s(theta, t)
        if s <= 0:
            return np.zeros(2)
        return np.array([s / np.sqrt(m0), -s * t / np.sqrt(lam)])

    def grad_rate(self, theta, t):
        m0, lam = theta
        if self._s(theta, t) <= 0:
            return np.zeros(2)
        return np.array([-np.sqrt(lam / m0), -np.sqrt(m0 / lam) + 2.0 * t])

    def project(self, theta, t, min_mass=MIN_MASS):
        m0 = max(float(theta[0]), min_mass)
        lam = max(float(theta[1]), self.min_lam)
        # keep sqrt(m0) - sqrt(lam) t >= sqrt(min_mass)
        if t > 0:
            lam_max = ((np.sqrt(m0) - np.sqrt(min_mass)) / t) ** 2
            lam = min(lam, max(lam_max, self.min_lam))
        return np.array([m0, lam])


class CustomMass(MassModel):
    """Wrap user callables ``f(theta, t)`` for each model map."""

    kind = "custom"

    def __init__(self, k, mass, rate, accel, grad_mass, grad_rate, project=None, param_names=None):
        self.k = k
        self._fns = dict(mass=mass, rate=rate, accel=accel, grad_mass=grad_mass, grad_rate=grad_rate)
        self._project = project
        self.param_names = tuple(param_names or (f"theta{i}" for i in range(k)))

    def mass(self, theta, t):
        return self._fns["mass"](theta, t)

    def rate(self, theta, t):
        return self._fns["rate"](theta, t)

    def accel(self, theta, t):
        return self._fns["accel"](theta, t)

    def grad_mass(self, theta, t):
        return np.asarray(self._fns["grad_mass"](theta, t), dtype=float)

    def grad_rate(self, theta, t):
        return np.asarray(self._fns["grad_rate"](theta, t), dtype=float)

    def project(self, theta, t, min_mass=MIN_MASS):
        if self._project is None:
            return np.asarray(theta, dtype=float)
        return self._project(theta, t, min_mass)


MODELS = {"constant": ConstantMass, "viscous": ViscousLeak, "orifice": OrificeLeak}


def make_model(kind):
    try:
        return MODELS[kind]()
    except KeyError:
        raise ValueError(f"unknown mass model {kind!r}; expected one of {sorted(MODELS)}") from None


@dataclass
class ParamEstimate:
    theta: np.ndarray
    gamma: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if self.theta.shape != self.gamma.shape:
            raise ValueError("theta and gamma must have the same length")
        if np.any(self.gamma <= 0):
            raise ValueError("learning rates must be positive")


@dataclass
class RegressorSample:
    w_L: np.ndarray
    v_L: np.ndarray
    thrust_sum: np.ndarray
    t: float


def regression_residual(model, theta, sample):
    return (sample.thrust_sum - model.mass(theta, sample.t) * sample.w_L
            - model.rate(theta, sample.t) * sample.v_L)


def regression_cost(model, theta, sample):
    r = regression_residual(model, theta, sample)
    return 0.5 * float(r @ r)


def regress_step(est, model, sample, dt, min_mass=MIN_MASS):
    """One explicit-Euler step of the gradient law, followed by projection."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    t = sample.t
    r = regression_residual(model, est.theta, sample)
    # rows psi_i = dm/dtheta_i w_L + dM/dtheta_i v_L
    Y = np.outer(model.grad_mass(est.theta, t), sample.w_L) + np.outer(model.grad_rate(est.theta, t), sample.v_L)
    theta = est.theta + dt * est.gamma * (Y @ r)
    theta = model.project(theta, t + dt, min_mass)
    return ParamEstimate(theta, est.gamma, t + dt)


def constant_mass_update(m_hat, sample, gamma, dt, min_mass=MIN_MASS):
    if dt <= 0:
        raise ValueError("dt must be positive")
    w = sample.w_L
    m = m_hat + dt * gamma * float(w @ (sample.thrust_sum - m_hat * w))
    return max(m, min_mass)


@dataclass
class ErrorDynamics:
    """Linear error system ``xi' = -A xi + Delta`` at one instant.

    ``S`` holds the symmetric matrix with the printed entries (its
    off-diagonal is ``A12 + A21``); ``S_sym = (A + A^T) / 2`` is the matrix
    whose smallest eigenvalue controls ``d|xi|/dt``. For the constant model
    every array is 1x1.
    """
    S: np.ndarray
    A: np.ndarray
    S_sym: np.ndarray
    Delta: np.ndarray
    xi: np.ndarray


def mass_disturbance(model, theta_true, sample):
    """Residual of the exact mass balance at the true parameters."""
    return regression_residual(model, theta_true, sample)


def error_dynamics_matrices(model, est, theta_true, sample, delta_m=None):
    t = sample.t
    th = est.theta
    w, v = sample.w_L, sample.v_L
    if delta_m is None:
        delta_m = mass_disturbance(model, theta_true, sample)
    e_m = model.mass(th, t) - model.mass(theta_true, t)
    K = est.gamma

    if isinstance(model, ConstantMass):
        g = K[0]
        s = np.array([[g * (w @ w)]])
        return ErrorDynamics(S=s, A=s.copy(), S_sym=s.copy(), Delta=np.array([g * (w @ delta_m)]),
                             xi=np.array([e_m]))

    e_M = model.rate(th, t) - model.rate(theta_true, t)
    gm = model.grad_mass(th, t)
    gM = model.grad_rate(th, t)
    a = gm @ (K * gm)
    b = gm @ (K * gM)
    c = gM @ (K * gM)
    ww, wv, vv = w @ w, w @ v, v @ v
    A = np.array([
        [a * ww + b * wv, a * wv + b * vv - 1.0],
        [b * ww + c * wv, b * wv + c * vv],
    ])
    S = np.array([[A[0, 0], A[0, 1] + A[1, 0]], [A[0, 1] + A[1, 0], A[1, 1]]])
    phi_d = gm * (w @ delta_m) + gM * (v @ delta_m)
    curv = model.accel(th, t) - model.accel(theta_true, t)
    Delta = np.array([gm @ (K * phi_d), curv + gM @ (K * phi_d)])
    return ErrorDynamics(S=S, A=A, S_sym=0.5 * (A + A.T), Delta=Delta, xi=np.array([e_m, e_M]))


def lambda_min_sym(S):
    """Smallest eigenvalue of the symmetric part of each matrix in ``S`` (..., n, n)."""
    S = np.asarray(S, dtype=float)
    Ssym = 0.5 * (S + np.swapaxes(S, -1, -2))
    if Ssym.shape[-1] == 1:
        return Ssym[..., 0, 0]
    if Ssym.shape[-1] == 2:
        a, b, d = Ssym[..., 0, 0], Ssym[..., 0, 1], Ssym[..., 1, 1]
        return 0.5 * (a + d) - np.hypot(0.5 * (a - d), b)
    return np.linalg.eigvalsh(Ssym)[..., 0]


@dataclass
class EissReport:
    int_lmin: float
    int_lmin_pos: float
    mu: float
    M: float
    lhs: float
    rhs: float
    passed: bool
    margin: float = field(default=0.0)


def eiss_bound_check(t, S, D, xi, mu, M, tol=1e-8):
    """Check the windowed exponential ISS bound on sampled data over ``[t[0], t[-1]]``.

    Both hypotheses (windowed lower bound ``mu`` on the integral of
    ``lambda_min(S)`` and upper bound ``M`` on the integral of its positive
    part) are verified first and :class:`HypothesisUnmet` is raised if either
    fails. ``tol`` is a relative tolerance on the final inequality.
    """
    t = np.asarray(t, dtype=float)
    lmin = lambda_min_sym(S)
    int_l = float(np.trapezoid(lmin, t))
    int_lp = float(np.trapezoid(np.maximum(lmin, 0.0), t))
    if not int_l >= mu * (1 - tol):
        raise HypothesisUnmet(f"integral of lambda_min {int_l:.6g} < mu = {mu:.6g}")
    if not int_lp <= M * (1 + tol):
        raise HypothesisUnmet(f"integral of positive part {int_lp:.6g} > M = {M:.6g}")
    xi = np.asarray(xi, dtype=float).reshape(len(t), -1)
    D = np.asarray(D, dtype=float).reshape(len(t), -1)
    lhs = float(np.linalg.norm(xi[-1]))
    int_D = float(np.trapezoid(np.linalg.norm(D, axis=1), t))
    rhs = float(np.exp(-mu) * np.linalg.norm(xi[0]) + np.exp(M - mu) * int_D)
    passed = lhs <= rhs * (1 + tol) + tol * 1e-6
    return EissReport(int_l, int_lp, mu, M, lhs, rhs, passed, rhs - lhs)
