import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fluidlift import mass_estimator as me
from fluidlift.errors import HypothesisUnmet

G = 9.81
E3 = np.array([0.0, 0.0, 1.0])

params = st.tuples(st.floats(1.0, 10.0), st.floats(0.01, 0.5), st.floats(0.0, 4.0))


def fd(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    out = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        out.append((f(x + e) - f(x - e)) / (2 * h))
    return np.array(out)


@settings(max_examples=60)
@given(params)
def test_viscous_derivatives(p):
    m0, lam, t = p
    m = me.ViscousLeak()
    th = np.array([m0, lam])
    assert np.allclose(m.grad_mass(th, t), fd(lambda x: m.mass(x, t), th), rtol=1e-6, atol=1e-8)
    assert np.allclose(m.grad_rate(th, t), fd(lambda x: m.rate(x, t), th), rtol=1e-6, atol=1e-8)
    h = 1e-6
    assert np.isclose(m.rate(th, t), (m.mass(th, t + h) - m.mass(th, t - h)) / (2 * h), rtol=1e-6)
    assert np.isclose(m.accel(th, t), (m.rate(th, t + h) - m.rate(th, t - h)) / (2 * h), rtol=1e-6)


@settings(max_examples=60)
@given(params)
def test_orifice_derivatives_before_depletion(p):
    m0, lam, t = p
    m = me.OrificeLeak()
    th = np.array([m0, lam * 0.05])
    if m._s(th, t) < 0.05:
        return
    assert np.allclose(m.grad_mass(th, t), fd(lambda x: m.mass(x, t), th), rtol=1e-5, atol=1e-7)
    assert np.allclose(m.grad_rate(th, t), fd(lambda x: m.rate(x, t), th), rtol=1e-5, atol=1e-7)
    h = 1e-6
    assert np.isclose(m.rate(th, t), (m.mass(th, t + h) - m.mass(th, t - h)) / (2 * h), rtol=1e-6)
    assert np.isclose(m.accel(th, t), 2 * th[1])


def test_orifice_clamped_after_depletion():
    m = me.OrificeLeak()
    th = np.array([4.0, 1.0])
    assert m.mass(th, 3.0) == 0.0 and m.rate(th, 3.0) == 0.0
    assert np.all(m.grad_mass(th, 3.0) == 0) and np.all(m.grad_rate(th, 3.0) == 0)


def test_projections():
    v = me.ViscousLeak()
    assert v.project([5.0, -0.2], 1.0)[1] == 0.0
    th = v.project([0.001, 0.1], 10.0, min_mass=0.01)
    assert v.mass(th, 10.0) >= 0.01 - 1e-15
    o = me.OrificeLeak()
    th = o.project([4.0, 10.0], 2.0, min_mass=0.01)
    assert o.mass(th, 2.0) >= 0.01 - 1e-12
    assert me.ConstantMass().project([-1.0], 0.0)[0] == me.MIN_MASS


def test_custom_model_and_registry():
    lin = me.CustomMass(2, lambda th, t: th[0] + th[1] * t, lambda th, t: th[1], lambda th, t: 0.0,
                        lambda th, t: [1.0, t], lambda th, t: [0.0, 1.0])
    assert lin.mass([2.0, -0.5], 2.0) == 1.0
    assert lin.param_names == ("theta0", "theta1")
    assert isinstance(me.make_model("viscous"), me.ViscousLeak)
    with pytest.raises(ValueError):
        me.make_model("leaky")


def test_estimate_validation():
    with pytest.raises(ValueError):
        me.ParamEstimate([1.0, 2.0], [0.1])
    with pytest.raises(ValueError):
        me.ParamEstimate([1.0], [0.0])


def test_update_descends_the_cost():
    rng = np.random.default_rng(0)
    model = me.ViscousLeak()
    for _ in range(20):
        th = np.array([rng.uniform(2, 8), rng.uniform(0, 0.3)])
        s = me.RegressorSample(rng.normal(size=3) + G * E3, rng.normal(size=3), rng.normal(size=3) * 5, 1.3)
        gamma = np.array([0.01, 0.001])
        step = me.regress_step(me.ParamEstimate(th, gamma, s.t), model, s, 1e-6).theta - th
        grad = fd(lambda x: me.regression_cost(model, x, s), th, 1e-7)
        assert np.allclose(step / 1e-6, -gamma * grad, rtol=1e-4, atol=1e-8)


def test_constant_update_matches_generic_step():
    s = me.RegressorSample(np.array([0.1, 0.0, G]), np.zeros(3), np.array([0.0, 0.0, 40.0]), 0.0)
    a = me.constant_mass_update(6.0, s, 0.01, 1e-3)
    b = me.regress_step(me.ParamEstimate([6.0], [0.01]), me.ConstantMass(), s, 1e-3).theta[0]
    assert np.isclose(a, b)
    with pytest.raises(ValueError):
        me.constant_mass_update(6.0, s, 0.01, 0.0)


def test_exact_parameters_are_a_fixed_point():
    model = me.ViscousLeak()
    th = np.array([5.0, 0.1])
    est = me.ParamEstimate(th, [0.01, 1e-4])
    rng = np.random.default_rng(1)
    for k in range(200):
        t = k * 0.01
        w, v = rng.normal(size=3) + G * E3, rng.normal(size=3)
        s = me.RegressorSample(w, v, model.mass(th, t) * w + model.rate(th, t) * v, t)
        est = me.regress_step(est, model, s, 0.01)
    assert np.allclose(est.theta, th, rtol=0, atol=1e-12)


def test_hover_convergence_rate_closed_form():
    # noise-free hover: m_hat' = gamma g^2 (m - m_hat), so the error decays like exp(-gamma g^2 t)
    gamma, dt, m = 0.01, 1e-3, 5.0
    est = me.ParamEstimate([7.5], [gamma])
    for k in range(2000):
        s = me.RegressorSample(G * E3, np.zeros(3), m * G * E3, k * dt)
        est = me.regress_step(est, me.ConstantMass(), s, dt)
    expect = 2.5 * (1 - dt * gamma * G ** 2) ** 2000
    assert np.isclose(est.theta[0] - m, expect, rtol=1e-12)
    assert np.isclose(est.theta[0] - m, 2.5 * np.exp(-gamma * G ** 2 * 2.0), rtol=1e-3)


@pytest.mark.parametrize("model,th_true,th0,gamma", [
    (me.ViscousLeak(), [5.0, 0.1], [6.0, 0.15], [0.01, 1e-3]),
    (me.OrificeLeak(), [5.0, 0.01], [6.0, 0.02], [0.01, 1e-4]),
])
def test_error_dynamics_identity(model, th_true, th0, gamma):
    """Along the continuous gradient flow, xi' = -A xi + Delta holds exactly."""
    th_true = np.asarray(th_true)
    K = np.asarray(gamma)

    def signals(t):
        w = np.array([0.5 * np.sin(t), 0.3 * np.cos(2 * t), G + 0.4 * np.sin(3 * t)])
        v = np.array([0.5 * np.cos(t), 0.2 * np.sin(1.5 * t), 0.3 * np.cos(0.7 * t)])
        dm = np.array([0.05 * np.sin(5 * t), 0.0, 0.02 * np.cos(4 * t)])
        thrust = model.mass(th_true, t) * w + model.rate(th_true, t) * v + dm
        return me.RegressorSample(w, v, thrust, t)

    def flow(th, t):
        s = signals(t)
        r = me.regression_residual(model, th, s)
        Y = np.outer(model.grad_mass(th, t), s.w_L) + np.outer(model.grad_rate(th, t), s.v_L)
        return K * (Y @ r)

    def xi(th, t):
        return np.array([model.mass(th, t) - model.mass(th_true, t), model.rate(th, t) - model.rate(th_true, t)])

    h = 1e-4
    path = [np.asarray(th0, dtype=float)]
    for k in range(5000):
        # RK4 on the parameter flow
        th, t = path[-1], k * h
        k1 = flow(th, t)
        k2 = flow(th + h / 2 * k1, t + h / 2)
        k3 = flow(th + h / 2 * k2, t + h / 2)
        k4 = flow(th + h * k3, t + h)
        path.append(th + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
    for k in range(500, 5000, 1000):
        # central difference of xi along the flow
        t = k * h
        xdot = (xi(path[k + 1], t + h) - xi(path[k - 1], t - h)) / (2 * h)
        ed = me.error_dynamics_matrices(model, me.ParamEstimate(path[k], K, t), th_true, signals(t))
        assert np.allclose(xdot, -ed.A @ ed.xi + ed.Delta, rtol=1e-5, atol=1e-7)
        assert np.allclose(ed.S[0, 1], ed.A[0, 1] + ed.A[1, 0])


def test_constant_error_dynamics_are_scalar():
    s = me.RegressorSample(np.array([0, 0, G]), np.zeros(3), np.array([0, 0, 5 * G + 0.1]), 0.0)
    ed = me.error_dynamics_matrices(me.ConstantMass(), me.ParamEstimate([6.0], [0.01]), [5.0], s)
    assert ed.S.shape == (1, 1)
    assert np.isclose(ed.S[0, 0], 0.01 * G ** 2)
    assert np.isclose(ed.Delta[0], 0.01 * G * 0.1)
    assert np.isclose(ed.xi[0], 1.0)


@settings(max_examples=100)
@given(st.tuples(*[st.floats(-100, 100)] * 4))
def test_lambda_min_closed_form(x):
    S = np.array([[x[0], x[1]], [x[2], x[3]]])
    ref = np.linalg.eigvalsh(0.5 * (S + S.T))[0]
    assert abs(me.lambda_min_sym(S) - ref) <= 1e-12 * max(1.0, np.abs(S).max())


def test_lambda_min_batched_and_general():
    rng = np.random.default_rng(2)
    S = rng.normal(size=(10, 3, 3))
    assert np.allclose(me.lambda_min_sym(S), [np.linalg.eigvalsh(0.5 * (s + s.T))[0] for s in S])
    assert np.allclose(me.lambda_min_sym(np.ones((4, 1, 1)) * 2.0), 2.0)


def test_eiss_bound_scalar_exact_decay():
    t = np.linspace(0, 2, 2001)
    s = 1.5
    xi = 3.0 * np.exp(-s * t)
    S = np.full((len(t), 1, 1), s)
    rep = me.eiss_bound_check(t, S, np.zeros(len(t)), xi, mu=s * 2.0, M=s * 2.0)
    assert rep.passed
    assert np.isclose(rep.lhs, rep.rhs, rtol=1e-6)


def test_eiss_rejects_unmet_hypotheses():
    t = np.linspace(0, 1, 101)
    S = np.full((len(t), 1, 1), 0.5)
    with pytest.raises(HypothesisUnmet):
        me.eiss_bound_check(t, S, np.zeros(len(t)), np.ones(len(t)), mu=1.0, M=2.0)
    with pytest.raises(HypothesisUnmet):
        me.eiss_bound_check(t, S, np.zeros(len(t)), np.ones(len(t)), mu=0.1, M=0.2)


def test_eiss_detects_violation():
    t = np.linspace(0, 1, 101)
    S = np.full((len(t), 1, 1), 1.0)
    growing = np.exp(t)
    rep = me.eiss_bound_check(t, S, np.zeros(len(t)), growing, mu=1.0, M=1.0)
    assert not rep.passed and rep.margin < 0
