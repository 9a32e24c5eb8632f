import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fluidlift import dynamics
from fluidlift.errors import SingularInertia, SingularMassMatrix
from fluidlift.manifold import E3, hat

from support import (J_LOAD, equivalent_full_input, hover_controller, make_params, random_state,
                     state_vector)

G = 9.81


def zero_cl(n):
    return dynamics.ClosedLoopInput(np.zeros((n, 3)), np.zeros((n, 3)), np.zeros((n, 3)))


def test_wind_formula():
    assert np.allclose(dynamics.wind_force(0.0), [0.0, 0.3, 0.0])
    assert abs(dynamics.wind_force(np.pi / 0.8)[2]) < 1e-15
    assert np.allclose(dynamics.wind_force(1.0, amplitude=0.0), 0.0)


def test_mass_schedules():
    m, md = dynamics.viscous_mass_schedule(5.0, 0.1)(2.0)
    assert np.isclose(m, 5.0 * np.exp(-0.2)) and np.isclose(md, -0.1 * m)
    m, md = dynamics.orifice_mass_schedule(4.0, 0.25)(1.0)
    # sqrt(m) falls linearly: sqrt(4) - sqrt(0.25) * 1 = 1.5
    assert np.isclose(m, 2.25) and np.isclose(md, -2 * 0.5 * 1.5)
    assert dynamics.orifice_mass_schedule(4.0, 0.25)(10.0) == (0.0, 0.0)


def test_square_layout_side():
    r = dynamics.square_layout(4, 0.8)
    assert np.isclose(np.linalg.norm(r[0] - r[1]), 0.8)
    assert np.allclose(r.sum(axis=0), 0.0, atol=1e-15)


def test_params_validation():
    with pytest.raises(ValueError):
        make_params(m_Q=0.0)
    with pytest.raises(ValueError):
        make_params(J_Q=(0.01, -0.01, 0.02))


def test_full_model_free_fall():
    p = make_params()
    s = dynamics.hover_state(4)
    u = dynamics.ControlInput(np.zeros((4, 3)), np.zeros((4, 3)))
    d = dynamics.full_derivatives(s, u, p, dynamics.Disturbance())
    assert np.allclose(d.v_dot, -G * E3, atol=1e-12)
    assert np.allclose(d.Omega_L_dot, 0.0, atol=1e-12)
    assert np.allclose(d.omega_dot, 0.0, atol=1e-12)
    res, _ = dynamics.full_residual(s, u, p, dynamics.Disturbance(), d)
    assert np.max(np.abs(res)) < 1e-10


def test_full_model_residual_random_states():
    rng = np.random.default_rng(7)
    p = make_params(lam=0.1)
    dist = dynamics.Disturbance(wind=dynamics.wind_force)
    for _ in range(20):
        s = random_state(rng, t=rng.uniform(0, 5))
        u = dynamics.ControlInput(rng.normal(scale=10, size=(4, 3)), np.zeros((4, 3)))
        d = dynamics.full_derivatives(s, u, p, dist)
        res, scale = dynamics.full_residual(s, u, p, dist, d)
        assert np.max(np.abs(res) / scale) < 1e-12


def test_closed_loop_zero_input():
    rng = np.random.default_rng(8)
    p = make_params()
    s = random_state(rng)
    d = dynamics.derivatives(s, zero_cl(4), p, dynamics.Disturbance())
    assert np.allclose(d.v_dot, -G * E3)
    J = J_LOAD
    Om = s.Omega_L
    assert np.allclose(d.Omega_L_dot, -np.linalg.solve(J, hat(Om) @ J @ Om))
    assert np.allclose(d.omega_dot, 0.0)


def test_closed_loop_hover_thrust_with_draining_mass():
    p = make_params(lam=0.1)
    s = dynamics.hover_state(4)
    s.v_L = np.array([0.3, -0.2, 0.1])
    s.t = 1.5
    m, md = p.mass_schedule(s.t)
    total = m * G * E3 + md * s.v_L
    # cables aligned with the required force so mu_j is parallel to q_j
    s.q = -np.tile(total / np.linalg.norm(total), (4, 1))
    mu = np.tile(total / 4, (4, 1))
    d = dynamics.closed_loop_derivatives(s, mu, np.zeros((4, 3)), np.zeros((4, 3)), p, dynamics.Disturbance())
    assert np.allclose(d.v_dot, 0.0, atol=1e-12)


def test_cable_rate_norm_conserved_without_inputs():
    rng = np.random.default_rng(9)
    p = make_params()
    s = random_state(rng)
    norms = np.linalg.norm(s.omega, axis=1)
    for _ in range(100):
        s = dynamics.step(s, lambda t, x: zero_cl(4), p, dynamics.Disturbance(), 0.01)
    assert np.allclose(np.linalg.norm(s.omega, axis=1), norms, atol=1e-9)


def test_free_rigid_body_conserves_energy_and_momentum():
    rng = np.random.default_rng(10)
    p = make_params()
    s = random_state(rng)
    s.Omega_L = np.array([0.1, 2.0, 0.05])
    J = J_LOAD

    def invariants(x):
        Om = x.Omega_L
        return 0.5 * Om @ J @ Om, np.linalg.norm(x.R_L @ J @ Om)

    e0, h0 = invariants(s)
    for _ in range(500):
        s = dynamics.step(s, lambda t, x: zero_cl(4), p, dynamics.Disturbance(), 0.002)
    e1, h1 = invariants(s)
    assert abs(e1 - e0) < 1e-8 * e0
    assert abs(h1 - h0) < 1e-8 * h0


def test_singular_inertia_raises():
    p = make_params()
    p.inertia_schedule = dynamics.constant_schedule(np.diag([1.0, 1.0, 0.0]))
    with pytest.raises(SingularInertia):
        dynamics.derivatives(dynamics.hover_state(4), zero_cl(4), p, dynamics.Disturbance())


def test_singular_mass_matrix_raises():
    p = make_params()
    p.inertia_schedule = dynamics.constant_schedule(np.zeros((3, 3)))
    p.r = np.zeros((4, 3))
    p.r_hat = np.zeros((4, 3, 3))
    u = dynamics.ControlInput(np.zeros((4, 3)), np.zeros((4, 3)))
    with pytest.raises(SingularMassMatrix):
        dynamics.full_derivatives(dynamics.hover_state(4), u, p, dynamics.Disturbance())


def test_step_rejects_bad_dt():
    p = make_params()
    with pytest.raises(ValueError):
        dynamics.step(dynamics.hover_state(4), lambda t, x: zero_cl(4), p, dynamics.Disturbance(), 0.1)


def test_orthogonality_check():
    q = np.tile(-E3, (2, 1))
    ok = dynamics.ClosedLoopInput(np.array([[0, 0, 3.0], [0, 0, 1.0]]), np.array([[1.0, 0, 0], [0, 2.0, 0]]),
                                  np.zeros((2, 3)))
    ok.check_orthogonality(q)
    bad = dynamics.ClosedLoopInput(ok.mu, np.array([[1.0, 0, 0.5], [0, 2.0, 0]]), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        bad.check_orthogonality(q)


def test_measurement_noise_amplitudes():
    dist = dynamics.Disturbance(position_amp=0.01, velocity_amp=0.02, attitude_amp=0.005)
    s = dynamics.hover_state(4)
    t = np.linspace(0, 30, 3001)
    dx = np.array([dynamics.measure(s, dist, ti, np.zeros(3)).x_L for ti in t])
    assert np.max(np.abs(dx)) <= 0.01 + 1e-15
    assert np.max(np.abs(dx)) > 0.009
    m = dynamics.measure(s, dynamics.Disturbance(), 1.0, np.ones(3))
    assert np.array_equal(m.x_L, s.x_L) and np.array_equal(m.vdot_L, np.ones(3))
    with pytest.raises(ValueError):
        dynamics.Disturbance(rate_amp=-1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_models_agree_under_cancelling_thrust(seed):
    rng = np.random.default_rng(seed)
    p = make_params(lam=0.1)
    dist = dynamics.Disturbance(wind=dynamics.wind_force)
    s = random_state(rng, t=rng.uniform(0, 10))
    mu = rng.normal(scale=5, size=(4, 1)) * s.q
    nu = np.cross(s.q, rng.normal(size=(4, 3)))
    cl = dynamics.ClosedLoopInput(mu, nu, rng.normal(scale=0.01, size=(4, 3)))
    full_in, d_cl = equivalent_full_input(s, cl, p, dist)
    d_full = dynamics.full_derivatives(s, full_in, p, dist)
    for a, b in ((d_full.v_dot, d_cl.v_dot), (d_full.Omega_L_dot, d_cl.Omega_L_dot),
                 (d_full.omega_dot, d_cl.omega_dot), (d_full.Omega_Q_dot, d_cl.Omega_Q_dot)):
        assert np.allclose(a, b, rtol=1e-8, atol=1e-8 * max(1.0, np.abs(b).max()))


def test_step_preserves_invariants_and_regulates():
    rng = np.random.default_rng(11)
    p = make_params()
    ctrl = hover_controller(p)
    s = random_state(rng, spread=0.1)
    e0 = np.linalg.norm(s.x_L)
    for _ in range(300):
        s = dynamics.step(s, ctrl, p, dynamics.Disturbance(), 0.01)
    assert dynamics.manifold_defect(s) < 1e-12
    assert np.linalg.norm(s.x_L) < 0.5 * e0
    assert np.isclose(s.t, 3.0)


def test_step_is_deterministic():
    rng = np.random.default_rng(12)
    p = make_params(lam=0.1)
    s0 = random_state(rng)
    ctrl = hover_controller(p)
    a = b = s0
    for _ in range(20):
        a = dynamics.step(a, ctrl, p, dynamics.Disturbance(wind=dynamics.wind_force), 0.005)
        b = dynamics.step(b, ctrl, p, dynamics.Disturbance(wind=dynamics.wind_force), 0.005)
    assert np.array_equal(state_vector(a), state_vector(b))
