"""Shared builders for the test suite."""
import numpy as np

from fluidlift import control, dynamics
from fluidlift.manifold import E3, exp_rotation, random_rotation, random_unit

J_LOAD = np.diag([0.3, 0.35, 0.4])


def make_params(n=4, m0=5.0, lam=None, m_Q=1.0, J_Q=(0.01, 0.012, 0.02), L=1.0):
    if lam is None:
        ms = dynamics.constant_schedule(m0)
    else:
        ms = dynamics.viscous_mass_schedule(m0, lam)
    js = dynamics.scaled_inertia_schedule(J_LOAD, ms, m0)
    r = dynamics.square_layout(n) if n == 4 else dynamics.square_layout(n, 0.8, 0.0)
    return dynamics.SystemParams(n, m_Q, np.diag(J_Q), L, r, ms, js)


def random_state(rng, n=4, t=0.0, spread=0.4):
    """Generic state near hover with all rates non-zero."""
    s = dynamics.hover_state(n, rng.uniform(-1, 1, 3))
    s.v_L = rng.normal(scale=0.5, size=3)
    s.R_L = random_rotation(rng) if spread > 1 else exp_rotation(spread * rng.normal(size=3))
    s.Omega_L = rng.normal(scale=0.5, size=3)
    s.q = np.array([exp_rotation(spread * random_unit(rng)) @ (-E3) for _ in range(n)])
    s.omega = np.array([np.cross(q, rng.normal(scale=0.5, size=3)) for q in s.q])
    s.R_Q = np.array([exp_rotation(0.2 * rng.normal(size=3)) for _ in range(n)])
    s.Omega_Q = rng.normal(scale=0.3, size=(n, 3))
    s.t = t
    return s


def true_measurement(state, vdot=None):
    return dynamics.Measurement(state.x_L, state.v_L, np.zeros(3) if vdot is None else vdot,
                                state.R_L, state.Omega_L, state.t)


def hover_controller(params, gains=None):
    """Closed-loop input callback regulating the load to the origin with exact mass knowledge."""
    gains = gains or control.Gains()

    def ctrl(t, s):
        m, md = params.mass_schedule(t)
        J, Jd = params.inertia_schedule(t)
        ref = control.LoadReference.hover()
        F, M = control.desired_wrench(true_measurement(s), ref, m, md, J, Jd, gains, params.g)
        Fj = control.allocate_cable_forces(F, M, s.R_L, params.r)
        mu, q_d = control.cable_setpoints_batch(Fj, s.q, s.q)
        nu = control.cable_feedback_batch(s.q, s.omega, q_d, gains, params.m_Q, params.L)
        return dynamics.ClosedLoopInput(mu, nu, -0.01 * s.Omega_Q)
    return ctrl


def state_vector(s):
    return np.concatenate([s.x_L, s.v_L, s.R_L.ravel(), s.Omega_L, s.q.ravel(), s.omega.ravel(),
                           s.R_Q.ravel(), s.Omega_Q.ravel()])


def equivalent_full_input(state, cl, params, dist):
    """Thrusts that realise a closed-loop input on the full model.

    The thrust law needs the load accelerations it produces; they are taken
    from the closed-loop model, so agreement of the two models is a fixpoint
    check of the cancellation.
    """
    d = dynamics.closed_loop_derivatives(state, cl.mu, cl.nu, cl.M, params, dist)
    meas = true_measurement(state, d.v_dot)
    u = control.assemble_u(cl.mu, cl.nu, meas, d.Omega_L_dot, state.q, state.omega, params)
    return dynamics.ControlInput(u, cl.M), d
