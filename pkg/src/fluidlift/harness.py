"""Scenario files, the closed simulation loop, run metrics and output files.

A scenario is a UTF-8 JSON object. Missing keys take the values in
:data:`DEFAULTS`; unknown keys are rejected. The effective configuration is
written next to the outputs of every run and loads back to the same scenario.
"""
import copy
import json
import os
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import control, dynamics, excitation, inertia_lut, mass_estimator, trajectory
from .errors import FluidLiftError, InputError, ParseError, ValidationError
from .manifold import E3, exp_rotation, rotation_to_quaternion

TRACE_VERSION = "trace-v1"

DEFAULTS = {
    "name": "scenario",
    "horizon": 15.0,
    "dt": 1e-3,
    "seed": 0,
    "dynamics_model": "closed_loop",
    "system": {
        "n": 4,
        "m_Q": 0.5,
        "J_Q": [0.0049, 0.0049, 0.0069],
        "L": 1.0,
        "layout_side": 0.8,
        "r": None,
        "g": 9.81,
    },
    "load": {
        "mass": {"mode": "constant", "m0": 5.0, "lam": 0.0},
        "inertia": [0.026, 0.026, 0.033],
    },
    "tank": None,
    "estimator": {
        "model": "constant",
        "gamma": [0.01],
        "theta0": None,
        "initial_mass_factor": 1.5,
        "min_mass": 0.01,
    },
    "inertia_mode": "true-schedule",
    "lut": {"file": None, "resolution": 32, "grid": [21, 13, 24]},
    "truth_resolution": 64,
    "disturbance": {
        "wind": True,
        "wind_amplitude": 0.3,
        "noise": {"position": 0.01, "velocity": 0.02, "acceleration": 0.02,
                  "attitude": 0.005, "rate": 0.005},
        "freqs": {k: list(v) for k, v in dynamics.NOISE_FREQS.items()},
        "phases": {k: list(v) for k, v in dynamics.NOISE_PHASES.items()},
    },
    "trajectory": {
        "kind": "hover",
        "waypoints": [[0.0, 0.0, 0.0, 0.0]],
        "tau": 0.0,
        "dither": None,
    },
    "gains": {
        "K_x": 4.0, "K_v": 4.0, "K_R": 16.0, "K_Omega": 8.0,
        "k_q": 100.0, "k_omega": 20.0, "k_Rj": 40.0, "k_Omegaj": 12.0, "f_max": None,
    },
    "initial_perturbation": {"position": 0.1, "attitude": 0.05, "cable": 0.05},
    "analysis": {"pe_T": 2.0, "pe_mu": 50.0, "tank_radius": None,
                 "eps_max": excitation.EPS_MAX, "jerk_max": excitation.JERK_MAX},
    "output": {"trace": "trace.csv", "summary": "summary.json", "plots": True},
}

MASS_MODES = ("constant", "viscous", "orifice")
TRAJ_KINDS = ("hover", "cubic", "tension", "quintic")


def _merge(base, over, path, problems):
    out = copy.deepcopy(base)
    for k, v in over.items():
        key = f"{path}.{k}" if path else k
        if k not in base:
            problems.append(f"{key}: unknown key")
            continue
        if isinstance(base[k], dict) and isinstance(v, dict) and k not in ("freqs", "phases"):
            out[k] = _merge(base[k], v, key, problems)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _num(cfg, dotted, problems, cond=None, msg=None, allow_none=False):
    cur = cfg
    for part in dotted.split("."):
        cur = cur[part]
    if cur is None and allow_none:
        return None
    if isinstance(cur, bool) or not isinstance(cur, (int, float)):
        raise ParseError(f"{dotted}: expected a number, got {type(cur).__name__}", field=dotted)
    if cond is not None and not cond(cur):
        problems.append(f"{dotted}: {msg} (got {cur})")
    return cur


def _vec(cfg, dotted, n=None, allow_none=False):
    cur = cfg
    for part in dotted.split("."):
        cur = cur[part]
    if cur is None and allow_none:
        return None
    try:
        arr = np.asarray(cur, dtype=float)
    except (TypeError, ValueError):
        raise ParseError(f"{dotted}: expected a numeric array", field=dotted) from None
    if n is not None and arr.size != n:
        raise ParseError(f"{dotted}: expected {n} numbers, got {arr.size}", field=dotted)
    return arr


@dataclass
class Scenario:
    """Validated scenario configuration plus the directory relative paths resolve against."""
    config: dict
    base_dir: str = "."

    def __eq__(self, other):
        return isinstance(other, Scenario) and json.dumps(self.config, sort_keys=True) == json.dumps(
            other.config, sort_keys=True)

    @property
    def horizon(self):
        return float(self.config["horizon"])

    @property
    def dt(self):
        return float(self.config["dt"])

    def path(self, p):
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    def to_json(self):
        return json.dumps(self.config, indent=2, sort_keys=True)

    def echo(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        cfg = copy.deepcopy(self.config)
        # absolute paths so the echo loads from the output directory
        if cfg.get("tank") and cfg["tank"].get("occupancy_file"):
            cfg["tank"]["occupancy_file"] = os.path.abspath(self.path(cfg["tank"]["occupancy_file"]))
        if cfg["lut"].get("file"):
            cfg["lut"]["file"] = os.path.abspath(self.path(cfg["lut"]["file"]))
        path = os.path.join(out_dir, "effective_scenario.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(cfg, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def validate(raw, base_dir="."):
    """Merge defaults, check types (ParseError) and constraints (ValidationError)."""
    if not isinstance(raw, dict):
        raise ParseError("scenario must be a JSON object")
    problems = []
    cfg = _merge(DEFAULTS, raw, "", problems)

    _num(cfg, "horizon", problems, lambda v: v > 0, "must be positive")
    _num(cfg, "dt", problems, lambda v: 0 < v <= 0.05, "must lie in (0, 0.05]")
    _num(cfg, "seed", problems, lambda v: v >= 0 and float(v).is_integer(), "must be a non-negative integer")
    if cfg["dynamics_model"] not in ("closed_loop", "full"):
        problems.append("dynamics_model: must be 'closed_loop' or 'full'")

    _num(cfg, "system.n", problems, lambda v: v >= 1 and float(v).is_integer(), "must be a positive integer")
    _num(cfg, "system.m_Q", problems, lambda v: v > 0, "must be positive")
    _num(cfg, "system.L", problems, lambda v: v > 0, "must be positive")
    _num(cfg, "system.layout_side", problems, lambda v: v > 0, "must be positive")
    _num(cfg, "system.g", problems, lambda v: v > 0, "must be positive")
    J_Q = _vec(cfg, "system.J_Q", 3)
    if np.any(J_Q <= 0):
        problems.append("system.J_Q: diagonal entries must be positive")
    r = _vec(cfg, "system.r", allow_none=True)
    if r is not None and r.size != 3 * int(cfg["system"]["n"]):
        problems.append("system.r: needs n rows of 3 numbers")

    mode = cfg["load"]["mass"].get("mode")
    if mode not in MASS_MODES:
        problems.append(f"load.mass.mode: must be one of {list(MASS_MODES)}")
    _num(cfg, "load.mass.m0", problems, lambda v: v > 0, "must be positive")
    _num(cfg, "load.mass.lam", problems, lambda v: v >= 0, "must be non-negative")
    if np.any(_vec(cfg, "load.inertia", 3) <= 0):
        problems.append("load.inertia: diagonal entries must be positive")

    tank = cfg["tank"]
    if tank is not None:
        if not isinstance(tank, dict):
            problems.append("tank: must be an object or null")
        else:
            if tank.get("occupancy_file") and not os.path.exists(os.path.join(base_dir, tank["occupancy_file"])):
                problems.append(f"tank.occupancy_file: file not found: {tank['occupancy_file']}")
            else:
                try:
                    tg = inertia_lut.TankGeometry.from_dict(tank, base_dir)
                except (KeyError, TypeError, ValueError) as exc:
                    problems.append(f"tank: {exc}")
                else:
                    if cfg["load"]["mass"]["m0"] < tg.empty_mass:
                        problems.append("load.mass.m0: below the empty tank mass")
                    if mode in ("viscous", "orifice"):
                        problems.append("tank: decaying whole-load mass modes cannot be combined with a tank")

    est = cfg["estimator"]
    kind = est.get("model")
    if kind not in mass_estimator.MODELS:
        problems.append(f"estimator.model: must be one of {sorted(mass_estimator.MODELS)}")
    else:
        k = mass_estimator.make_model(kind).k
        gamma = _vec(cfg, "estimator.gamma")
        if gamma.size != k:
            problems.append(f"estimator.gamma: model {kind!r} needs {k} learning rates")
        elif np.any(gamma <= 0):
            problems.append("estimator.gamma: learning rates must be positive")
        th0 = _vec(cfg, "estimator.theta0", allow_none=True)
        if th0 is not None and th0.size != k:
            problems.append(f"estimator.theta0: model {kind!r} needs {k} parameters")
    _num(cfg, "estimator.initial_mass_factor", problems, lambda v: v > 0, "must be positive")
    _num(cfg, "estimator.min_mass", problems, lambda v: v > 0, "must be positive")

    if cfg["inertia_mode"] not in ("true-schedule", "lut"):
        problems.append("inertia_mode: must be 'true-schedule' or 'lut'")
    if cfg["inertia_mode"] == "lut" and tank is None:
        problems.append("inertia_mode: 'lut' requires a tank")
    lut = cfg["lut"]
    if lut.get("file") and not os.path.exists(os.path.join(base_dir, lut["file"])):
        problems.append(f"lut.file: file not found: {lut['file']}")
    grid = _vec(cfg, "lut.grid", 3)
    if np.any(grid < 2):
        problems.append("lut.grid: sizes must be at least 2")
    _num(cfg, "lut.resolution", problems, lambda v: v >= 4, "must be at least 4")

    d = cfg["disturbance"]
    _num(cfg, "disturbance.wind_amplitude", problems, lambda v: v >= 0, "must be non-negative")
    for ch, v in d["noise"].items():
        if ch not in dynamics.NOISE_FREQS:
            problems.append(f"disturbance.noise.{ch}: unknown channel")
        else:
            _num(cfg, f"disturbance.noise.{ch}", problems, lambda x: x >= 0, "must be non-negative")

    tr = cfg["trajectory"]
    if tr["kind"] not in TRAJ_KINDS:
        problems.append(f"trajectory.kind: must be one of {list(TRAJ_KINDS)}")
    wps = _vec(cfg, "trajectory.waypoints")
    if wps.ndim != 2 or wps.shape[1] != 4:
        problems.append("trajectory.waypoints: rows must be [t, x, y, z]")
    elif tr["kind"] != "hover" and len(wps) < 2:
        problems.append("trajectory.waypoints: need at least two knots")
    elif len(wps) > 1 and np.any(np.diff(wps[:, 0]) <= 0):
        problems.append("trajectory.waypoints: times must be strictly increasing")
    _num(cfg, "trajectory.tau", problems, lambda v: v >= 0, "must be non-negative")
    if tr["dither"] is not None:
        dz = tr["dither"]
        if not isinstance(dz, dict) or "amplitudes" not in dz or "freqs" not in dz:
            problems.append("trajectory.dither: needs 'amplitudes' and 'freqs'")

    for name, v in cfg["gains"].items():
        if name == "f_max":
            _num(cfg, "gains.f_max", problems, lambda x: x > 0, "must be positive", allow_none=True)
        else:
            _num(cfg, f"gains.{name}", problems, lambda x: x > 0, "must be positive")
    for name in cfg["initial_perturbation"]:
        _num(cfg, f"initial_perturbation.{name}", problems, lambda x: x >= 0, "must be non-negative")
    _num(cfg, "analysis.pe_T", problems, lambda v: v > 0, "must be positive")

    if problems:
        raise ValidationError(problems)
    return Scenario(cfg, base_dir)


def loads_scenario(text, base_dir="."):
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    return validate(raw, base_dir)


def load_scenario(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read scenario: {exc}") from exc
    return loads_scenario(text, os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------- building blocks

def build_tank(sc):
    return None if sc.config["tank"] is None else inertia_lut.TankGeometry.from_dict(sc.config["tank"], sc.base_dir)


def build_mass_schedule(sc):
    m = sc.config["load"]["mass"]
    if m["mode"] == "constant":
        return dynamics.constant_schedule(float(m["m0"]))
    if m["mode"] == "viscous":
        return dynamics.viscous_mass_schedule(float(m["m0"]), float(m["lam"]))
    return dynamics.orifice_mass_schedule(float(m["m0"]), float(m["lam"]))


class InertiaTruth:
    """Inertia as a function of mass: tank hydrostatics (level load) or scaling of a reference tensor."""

    def __init__(self, sc, tank):
        self.tank = tank
        if tank is not None:
            self._f = inertia_lut.upright_schedule(tank, resolution=int(sc.config["truth_resolution"]))
        else:
            self.J0 = np.diag(np.asarray(sc.config["load"]["inertia"], dtype=float))
            self.m0 = float(sc.config["load"]["mass"]["m0"])

    def at_mass(self, m):
        """``(J, dJ/dm)`` at mass ``m``."""
        if self.tank is not None:
            return self._f(m)
        return self.J0 * (m / self.m0), self.J0 / self.m0

    def schedule(self, mass_schedule):
        last = [None, None]

        def sched(t):
            m, mdot = mass_schedule(t)
            if m != last[0]:
                last[:] = [m, self.at_mass(m)]
            J, dJ = last[1]
            return J, dJ * mdot
        return sched


def build_params(sc, tank=None, truth=None):
    s = sc.config["system"]
    n = int(s["n"])
    r = np.asarray(s["r"], dtype=float).reshape(n, 3) if s["r"] is not None else dynamics.square_layout(n, s["layout_side"])
    ms = build_mass_schedule(sc)
    truth = truth or InertiaTruth(sc, tank)
    return dynamics.SystemParams(n=n, m_Q=float(s["m_Q"]), J_Q=np.diag(s["J_Q"]), L=float(s["L"]), r=r,
                                 mass_schedule=ms, inertia_schedule=truth.schedule(ms), g=float(s["g"]))


def build_disturbance(sc):
    d = sc.config["disturbance"]
    amp = float(d["wind_amplitude"])
    wind = (lambda t: dynamics.wind_force(t, amp)) if d["wind"] else None
    nz = d["noise"]
    return dynamics.Disturbance(
        wind=wind,
        position_amp=float(nz.get("position", 0.0)), velocity_amp=float(nz.get("velocity", 0.0)),
        acceleration_amp=float(nz.get("acceleration", 0.0)), attitude_amp=float(nz.get("attitude", 0.0)),
        rate_amp=float(nz.get("rate", 0.0)),
        freqs={k: list(v) for k, v in d["freqs"].items()}, phases={k: list(v) for k, v in d["phases"].items()})


def build_plan(sc):
    tr = sc.config["trajectory"]
    wps = np.asarray(tr["waypoints"], dtype=float)
    if tr["kind"] == "hover" or len(wps) < 2:
        plan = trajectory.hover_plan(wps[0, 1:], max(sc.horizon, 1e-3))
    else:
        wp = trajectory.Waypoints(wps[:, 0], wps[:, 1:])
        if tr["kind"] == "quintic":
            plan = trajectory.min_jerk_quintic(wp)
        else:
            plan = trajectory.tension_spline(wp, float(tr["tau"]) if tr["kind"] == "tension" else 0.0)
    if tr["dither"]:
        dz = tr["dither"]
        plan = trajectory.add_dither(plan, dz["amplitudes"], dz["freqs"],
                                     dz.get("phases", trajectory.DEFAULT_PHASES),
                                     accel_cap=dz.get("accel_cap"), freq_cap=dz.get("freq_cap"), pe_T=None)
    return plan


def build_gains(sc):
    return control.Gains(**sc.config["gains"])


def build_estimator(sc, m_true0):
    e = sc.config["estimator"]
    model = mass_estimator.make_model(e["model"])
    if e["theta0"] is not None:
        theta0 = np.asarray(e["theta0"], dtype=float)
    else:
        theta0 = np.zeros(model.k)
        theta0[0] = float(e["initial_mass_factor"]) * m_true0
    est = mass_estimator.ParamEstimate(model.project(theta0, 0.0, e["min_mass"]), e["gamma"], 0.0)
    return model, est


def build_lut(sc, tank):
    lut = sc.config["lut"]
    if lut.get("file"):
        table = inertia_lut.load_lut(sc.path(lut["file"]))
        if table.tank_hash != tank.hash():
            raise ValidationError(["lut.file: table was built for a different tank"])
        return table
    ns, nt, npf = (int(v) for v in lut["grid"])
    return inertia_lut.build_lut(tank, ns, nt, npf, resolution=int(lut["resolution"]))


def initial_state(sc, params):
    """Hover configuration with seeded perturbations of position, attitude and cable directions."""
    rng = np.random.default_rng(int(sc.config["seed"]))
    p = sc.config["initial_perturbation"]
    x0 = np.asarray(sc.config["trajectory"]["waypoints"][0][1:], dtype=float)
    st = dynamics.hover_state(params.n, x0)
    st.x_L = st.x_L + p["position"] * rng.uniform(-1.0, 1.0, 3)
    st.R_L = exp_rotation(p["attitude"] * rng.uniform(-1.0, 1.0, 3))
    for j in range(params.n):
        st.q[j] = exp_rotation(p["cable"] * rng.uniform(-1.0, 1.0, 3)) @ st.q[j]
        st.q[j] /= np.linalg.norm(st.q[j])
    return st


# ---------------------------------------------------------------- run

def trace_columns(n):
    cols = ["t", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az", "qw", "qx", "qy", "qz",
            "Omega_x", "Omega_y", "Omega_z"]
    for j in range(n):
        cols += [f"q{j}_{a}" for a in "xyz"] + [f"omega{j}_{a}" for a in "xyz"]
    cols += ["m_true", "m_hat"]
    cols += [f"J_true_{c}" for c in ("xx", "xy", "xz", "yy", "yz", "zz")]
    cols += [f"J_hat_{c}" for c in ("xx", "xy", "xz", "yy", "yz", "zz")]
    cols += [f"u{j}_norm" for j in range(n)]
    cols += ["pe_integrand", "xd", "yd", "zd"]
    return cols


_IU = np.triu_indices(3)


@dataclass
class RunMetrics:
    t: np.ndarray
    pos_err: np.ndarray
    mass_err: np.ndarray
    mass_rel_err: np.ndarray
    inertia_err: np.ndarray
    pe: Optional[excitation.ConstantPEReport]
    hydro: Optional[excitation.HydrostaticReport]
    trace: np.ndarray
    columns: list
    wall_time: float = 0.0
    warnings: int = 0
    summary: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def column(self, name):
        return self.trace[:, self.columns.index(name)]


class SimulationError(FluidLiftError):
    def __init__(self, step, t, cause):
        super().__init__(f"step {step} (t = {t:.4f} s): {type(cause).__name__}: {cause}")
        self.step = step
        self.cause = cause


def run(sc, out_dir=None, progress=None, lut=None):
    """Simulate the scenario; returns :class:`RunMetrics` and writes trace/summary files when ``out_dir`` is set."""
    t_wall = time.perf_counter()
    tank = build_tank(sc)
    truth = InertiaTruth(sc, tank)
    params = build_params(sc, tank, truth)
    dist = build_disturbance(sc)
    plan = build_plan(sc)
    gains = build_gains(sc)
    ctrl = control.LoadController(params, gains)
    m_true0 = params.mass_schedule(0.0)[0]
    model, est = build_estimator(sc, m_true0)
    min_mass = float(sc.config["estimator"]["min_mass"])
    use_lut = sc.config["inertia_mode"] == "lut"
    if use_lut and lut is None:
        lut = build_lut(sc, tank)
    full = sc.config["dynamics_model"] == "full"

    dt = sc.dt
    nsteps = int(round(sc.horizon / dt))
    if nsteps < 1:
        raise ValidationError(["horizon: shorter than one step"])
    n = params.n
    cols = trace_columns(n)
    trace = np.zeros((nsteps + 1, len(cols)))
    g = params.g

    t_grid = np.arange(nsteps + 1) * dt
    ref_x, ref_v, ref_a = plan.evaluate(t_grid, order=2)
    state = initial_state(sc, params)
    vdot = np.zeros(3)
    mu_prev = None
    lut_prev = None
    n_warn = 0
    out = None

    def record(k, t, state, meas, m_hat, J_hat, u):
        m_t, _ = params.mass_schedule(t)
        J_t, _ = params.inertia_schedule(t)
        x_d = ref_x[k]
        row = [t, *state.x_L, *state.v_L, *vdot, *rotation_to_quaternion(state.R_L), *state.Omega_L]
        for j in range(n):
            row += [*state.q[j], *state.omega[j]]
        row += [m_t, m_hat, *J_t[_IU], *J_hat[_IU]]
        row += list(np.linalg.norm(u, axis=1)) if u is not None else [np.nan] * n
        w = meas.vdot_L + g * E3
        row += [float(w @ w), *x_d]
        trace[k] = row

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        for k in range(nsteps + 1):
            t = k * dt
            try:
                meas = dynamics.measure(state, dist, t, vdot)
                if mu_prev is not None:
                    sample = mass_estimator.RegressorSample(meas.vdot_L + g * E3, meas.v_L, mu_prev.sum(axis=0), t - dt)
                    est = mass_estimator.regress_step(est, model, sample, dt, min_mass)
                m_hat = float(model.mass(est.theta, t))
                mdot_hat = float(model.rate(est.theta, t))
                if use_lut:
                    lut_prev = inertia_lut.query(lut, max(m_hat, lut.m_T), meas.R_L, lut_prev, dt if k else None)
                    J_hat, Jdot_hat = lut_prev.J, lut_prev.Jdot
                else:
                    J_hat, dJ = truth.at_mass(m_hat)
                    J_hat, Jdot_hat = J_hat, dJ * mdot_hat
                ref = control.LoadReference(ref_x[k], ref_v[k], ref_a[k])
                out = ctrl.compute(meas, ref, m_hat, mdot_hat, J_hat, Jdot_hat, state)
                inputs = out.full() if full else out.closed_loop()
                if k == 0:
                    # no acceleration history yet; record the one the first input produces
                    vdot, _ = dynamics.load_accelerations(state, inputs, params, dist)
                    meas = dynamics.measure(state, dist, t, vdot)
                record(k, t, state, meas, m_hat, J_hat, out.u)
                if k == nsteps:
                    break
                state = dynamics.step(state, lambda _t, _s: inputs, params, dist, dt)
                vdot, Om_dot = dynamics.load_accelerations(state, inputs, params, dist)
                ctrl.observe(Om_dot)
                mu_prev = out.mu
            except FluidLiftError as exc:
                raise SimulationError(k, t, exc) from exc
            if progress is not None and k % 1000 == 0:
                progress(k, nsteps)
        n_warn = len(caught)

    metrics = _metrics(sc, trace, cols, params, tank)
    metrics.wall_time = time.perf_counter() - t_wall
    metrics.warnings = n_warn
    metrics.summary = summarize(metrics)
    if out_dir is not None:
        write_outputs(sc, metrics, out_dir)
    return metrics


def _metrics(sc, trace, cols, params, tank):
    idx = {c: i for i, c in enumerate(cols)}
    t = trace[:, 0]
    x = trace[:, 1:4]
    xd = trace[:, [idx["xd"], idx["yd"], idx["zd"]]]
    m_t = trace[:, idx["m_true"]]
    m_h = trace[:, idx["m_hat"]]
    Jt = trace[:, idx["J_true_xx"]:idx["J_true_xx"] + 6]
    Jh = trace[:, idx["J_hat_xx"]:idx["J_hat_xx"] + 6]
    # Frobenius norm from the upper triangle: off-diagonals count twice
    wts = np.array([1.0, 2.0, 2.0, 1.0, 2.0, 1.0])
    J_err = np.sqrt(((Jh - Jt) ** 2) @ wts)
    an = sc.config["analysis"]
    pe = hydro = None
    T = float(an["pe_T"])
    a = trace[:, 7:10]
    if t[-1] - t[0] >= T and T / (t[1] - t[0] if len(t) > 1 else 1.0) >= excitation.MIN_WINDOW_POINTS:
        pe = excitation.constant_mass_pe(t, a, float(an["pe_mu"]), T, params.g)
    if len(t) > 3:
        Om = trace[:, 14:17]
        Omd = np.gradient(Om, t, axis=0)
        jerk = np.gradient(a, t, axis=0)
        radius = an["tank_radius"]
        if radius is None:
            radius = 0.0 if tank is None else float(np.max(np.abs(np.array(tank.bounds()))))
        hydro = excitation.hydrostatic_validity(a, Om, Omd, jerk, radius, an["eps_max"], an["jerk_max"], params.g)
    return RunMetrics(t=t, pos_err=np.linalg.norm(x - xd, axis=1), mass_err=np.abs(m_h - m_t),
                      mass_rel_err=np.abs(m_h - m_t) / np.maximum(np.abs(m_t), 1e-12), inertia_err=J_err,
                      pe=pe, hydro=hydro, trace=trace, columns=cols)


def summarize(metrics):
    """Terminal errors, worst-case mass tracking and worst-window excitation."""
    if len(metrics) == 0:
        raise ValueError("empty run")
    t = metrics.t
    late = t >= 5.0
    s = {
        "trace_version": TRACE_VERSION,
        "steps": int(len(t) - 1),
        "t_final": float(t[-1]),
        "terminal_position_error": float(metrics.pos_err[-1]),
        "terminal_mass_error": float(metrics.mass_err[-1]),
        "terminal_mass_rel_error": float(metrics.mass_rel_err[-1]),
        "terminal_inertia_error": float(metrics.inertia_err[-1]),
        "max_mass_rel_error_after_5s": float(metrics.mass_rel_err[late].max()) if late.any() else None,
        "m_hat_final": float(metrics.column("m_hat")[-1]),
        "m_true_final": float(metrics.column("m_true")[-1]),
        "wall_time_s": float(metrics.wall_time),
        "clamp_warnings": int(metrics.warnings),
    }
    if metrics.pe is not None:
        s["pe_window_T"] = None
        s["pe_worst_window_integral"] = metrics.pe.worst
        s["pe_mu"] = metrics.pe.mu
        s["pe_all_windows_pass"] = metrics.pe.passed
    if metrics.hydro is not None:
        s["hydrostatic_flagged_fraction"] = metrics.hydro.flagged_fraction
        s["hydrostatic_eps_max"] = float(metrics.hydro.eps.max())
        s["hydrostatic_jerk_max"] = float(metrics.hydro.jerk.max())
    return s


def write_trace(path, metrics):
    np.savetxt(path, metrics.trace, delimiter=",", header=",".join(metrics.columns), comments="", fmt="%.10e")


def read_trace(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def plot_svgs(metrics, out_dir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = metrics.t
    paths = []
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for i, lab in enumerate("xyz"):
        ax.plot(t, metrics.trace[:, 1 + i], label=lab)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("load position [m]")
    ax.legend()
    fig.tight_layout()
    paths.append(os.path.join(out_dir, "position.svg"))
    fig.savefig(paths[-1])
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(t, metrics.column("m_true"), label="true")
    ax.plot(t, metrics.column("m_hat"), "--", label="estimate")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("load mass [kg]")
    ax.legend()
    fig.tight_layout()
    paths.append(os.path.join(out_dir, "mass.svg"))
    fig.savefig(paths[-1])
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    for c in ("xx", "yy", "zz"):
        line, = ax.plot(t, metrics.column(f"J_true_{c}"), label=f"J_{c}")
        ax.plot(t, metrics.column(f"J_hat_{c}"), "--", color=line.get_color(), label=f"J_{c} est.")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("inertia [kg m^2]")
    ax.legend(ncol=2, fontsize="small")
    fig.tight_layout()
    paths.append(os.path.join(out_dir, "inertia.svg"))
    fig.savefig(paths[-1])
    plt.close(fig)
    return paths


def write_outputs(sc, metrics, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    o = sc.config["output"]
    sc.echo(out_dir)
    write_trace(os.path.join(out_dir, o["trace"]), metrics)
    summary = dict(metrics.summary)
    summary["pe_window_T"] = float(sc.config["analysis"]["pe_T"])
    summary["scenario"] = sc.config["name"]
    with open(os.path.join(out_dir, o["summary"]), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if o["plots"]:
        plot_svgs(metrics, out_dir)
