"""Windowed excitation and hydrostatic-validity checks on sampled trajectories.

All integrals use the trapezoidal rule on the supplied sample grid. Windows
have length ``T`` and start every ``T / 10`` seconds unless a stride is given.
"""
import csv
from dataclasses import dataclass, field, asdict
from typing import List, Optional

import numpy as np

from .mass_estimator import lambda_min_sym

GRAVITY = 9.81
EPS_MAX = 0.1
JERK_MAX = 2.0
MIN_WINDOW_POINTS = 100


@dataclass(frozen=True)
class ExcitationBounds:
    """Uniform bounds on the model gradients over the admissible parameter set."""
    a_lo: float
    a_hi: float
    b_lo: float
    b_hi: float
    c_hi: float

    def __post_init__(self):
        if not (0 < self.a_lo <= self.a_hi and 0 < self.b_lo <= self.b_hi and self.c_hi > 0):
            raise ValueError("need 0 < a_lo <= a_hi, 0 < b_lo <= b_hi and c_hi > 0")


@dataclass
class WindowReport:
    t_start: float
    t_end: float
    int_lmin: float = float("nan")
    int_lmin_pos: float = float("nan")
    S11_int: float = float("nan")
    S22_int: float = float("nan")
    det_int: float = float("nan")
    H_drift: float = float("nan")
    eps_max: float = float("nan")
    jerk_max: float = float("nan")
    verdicts: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(v for v in self.verdicts.values() if v is not None)


def lambda_min_2x2(S11, S12, S22):
    """Closed-form smallest eigenvalue of ``[[S11, S12], [S12, S22]]``."""
    S11, S12, S22 = (np.asarray(x, dtype=float) for x in (S11, S12, S22))
    return 0.5 * (S11 + S22) - np.hypot(0.5 * (S11 - S22), S12)


def _check_grid(t):
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or len(t) < MIN_WINDOW_POINTS:
        raise ValueError(f"need a 1-D grid with at least {MIN_WINDOW_POINTS} samples per window")
    if np.any(np.diff(t) <= 0):
        raise ValueError("sample times must be strictly increasing")
    return t


def window_slices(t, T, stride=None):
    """Index slices of all windows ``[t0, t0 + T]`` fully inside the grid."""
    t = np.asarray(t, dtype=float)
    if T <= 0:
        raise ValueError("window length must be positive")
    stride = T / 10.0 if stride is None else stride
    span = t[-1] - t[0]
    tol = 1e-9 * max(1.0, abs(t[-1]))
    out = []
    k = 0
    while k * stride + T <= span + tol:
        t0 = t[0] + k * stride
        i0 = int(np.searchsorted(t, t0 - tol))
        i1 = int(np.searchsorted(t, t0 + T + tol, side="right"))
        out.append(slice(i0, i1))
        k += 1
    return out


def pe_window_check(t, S, mu, M_cap):
    """Windowed lower/upper bound check on ``lambda_min(S)`` over one window."""
    t = _check_grid(t)
    lmin = lambda_min_sym(S)
    il = float(np.trapezoid(lmin, t))
    ilp = float(np.trapezoid(np.maximum(lmin, 0.0), t))
    return WindowReport(float(t[0]), float(t[-1]), int_lmin=il, int_lmin_pos=ilp,
                        verdicts={"lower": il >= mu, "upper": ilp <= M_cap})


def pe_windows(t, S, T, mu, M_cap, stride=None):
    t = np.asarray(t, dtype=float)
    S = np.asarray(S, dtype=float)
    return [pe_window_check(t[sl], S[sl], mu, M_cap) for sl in window_slices(t, T, stride)]


@dataclass
class ElementwiseVerdict:
    S11_int: float
    S22_int: Optional[float]
    det_int: Optional[float]
    s11_ok: bool
    s22_ok: Optional[bool]
    det_ok: Optional[bool]

    def as_tuple(self):
        return self.s11_ok, self.s22_ok, self.det_ok


def necessary_elementwise_check(t, S):
    """Windowed integrals of ``S11``, ``S22`` and ``det S`` with strict-positivity verdicts.

    For a 1x1 ``S`` only the first condition applies; the other two are
    returned as ``None``.
    """
    t = _check_grid(t)
    S = np.asarray(S, dtype=float)
    i11 = float(np.trapezoid(S[:, 0, 0], t))
    if S.shape[-1] == 1:
        return ElementwiseVerdict(i11, None, None, i11 > 0, None, None)
    S12 = 0.5 * (S[:, 0, 1] + S[:, 1, 0])
    i22 = float(np.trapezoid(S[:, 1, 1], t))
    idet = float(np.trapezoid(S[:, 0, 0] * S[:, 1, 1] - S12 ** 2, t))
    return ElementwiseVerdict(i11, i22, idet, i11 > 0, i22 > 0, idet > 0)


def _rowdot(a, b):
    return np.einsum("ij,ij->i", a, b)


def diag_sufficient_check(t, v_L, w_L, bounds, T, stride=None):
    """Windowed diagonal-dominance conditions; returns ``(all_pass, per-window list)``.

    Each entry is ``(t_start, I_w, I_v)`` with
    ``I_w = int(a_lo^2 |w|^2 - c_hi |w.v|)`` and
    ``I_v = int(b_lo^2 |v|^2 - c_hi |w.v|)``.
    """
    t = np.asarray(t, dtype=float)
    v_L = np.asarray(v_L, dtype=float)
    w_L = np.asarray(w_L, dtype=float)
    cross = np.abs(_rowdot(w_L, v_L))
    fw = bounds.a_lo ** 2 * _rowdot(w_L, w_L) - bounds.c_hi * cross
    fv = bounds.b_lo ** 2 * _rowdot(v_L, v_L) - bounds.c_hi * cross
    rows = []
    for sl in window_slices(t, T, stride):
        tw = _check_grid(t[sl])
        rows.append((float(tw[0]), float(np.trapezoid(fw[sl], tw)), float(np.trapezoid(fv[sl], tw))))
    ok = bool(rows) and all(iw > 0 and iv > 0 for _, iw, iv in rows)
    return ok, rows


def energy(x_L, v_L, g=GRAVITY):
    x_L = np.asarray(x_L, dtype=float)
    v_L = np.asarray(v_L, dtype=float)
    return 0.5 * np.sum(v_L * v_L, axis=-1) + g * x_L[..., 2]


def energy_drift_check(t, x_L, v_L, w_L, bounds, T, g=GRAVITY, stride=None):
    """Windowed energy-drift condition; returns ``(all_pass, rows)``.

    Rows are ``(t_start, drift, rhs)`` with the verdict ``drift < rhs``.
    """
    t = np.asarray(t, dtype=float)
    v_L = np.asarray(v_L, dtype=float)
    w_L = np.asarray(w_L, dtype=float)
    H = energy(x_L, v_L, g)
    ww = _rowdot(w_L, w_L)
    vv = _rowdot(v_L, v_L)
    rows = []
    for sl in window_slices(t, T, stride):
        tw = _check_grid(t[sl])
        drift = abs(float(H[sl][-1] - H[sl][0]))
        rhs = min(bounds.a_lo ** 2 * np.trapezoid(ww[sl], tw), bounds.b_lo ** 2 * np.trapezoid(vv[sl], tw)) / bounds.c_hi
        rows.append((float(tw[0]), drift, float(rhs)))
    ok = bool(rows) and all(d < r for _, d, r in rows)
    return ok, rows


@dataclass
class ConstantPEReport:
    starts: np.ndarray
    integrals: np.ndarray
    mu: float

    @property
    def worst(self):
        return float(np.min(self.integrals)) if len(self.integrals) else float("nan")

    @property
    def passed(self):
        return bool(len(self.integrals)) and bool(np.all(self.integrals >= self.mu))


def pe_integrand(a_L, g=GRAVITY):
    """``|a + g e3|^2`` for accelerations ``a`` of shape (K, 3)."""
    w = np.array(a_L, dtype=float, copy=True)
    w[..., 2] += g
    return np.sum(w * w, axis=-1)


def constant_mass_pe(t, a_L, mu, T, g=GRAVITY, stride=None):
    """Windowed integral of ``|x_ddot + g e3|^2`` against ``mu`` at every window start."""
    t = np.asarray(t, dtype=float)
    f = pe_integrand(a_L, g)
    starts, vals = [], []
    for sl in window_slices(t, T, stride):
        tw = _check_grid(t[sl])
        starts.append(tw[0])
        vals.append(np.trapezoid(f[sl], tw))
    return ConstantPEReport(np.array(starts), np.array(vals), mu)


@dataclass
class HydrostaticReport:
    eps: np.ndarray
    jerk: np.ndarray
    flags: np.ndarray
    eps_max: float
    jerk_max: float

    @property
    def flagged_fraction(self):
        return float(np.mean(self.flags)) if len(self.flags) else 0.0

    @property
    def passed(self):
        return not bool(np.any(self.flags))


def hydrostatic_validity(a_L, Omega_L, Omega_dot_L, jerk, tank_radius, eps_max=EPS_MAX, j_max=JERK_MAX, g=GRAVITY):
    """Per-sample gravity-domination ratio and jerk magnitude, flagged against thresholds."""
    a = np.linalg.norm(np.atleast_2d(a_L), axis=-1)
    om = np.linalg.norm(np.atleast_2d(Omega_L), axis=-1)
    omd = np.linalg.norm(np.atleast_2d(Omega_dot_L), axis=-1)
    jn = np.linalg.norm(np.atleast_2d(jerk), axis=-1)
    eps = (a + omd * tank_radius + om * om * tank_radius) / g
    flags = (eps > eps_max) | (jn > j_max)
    return HydrostaticReport(eps, jn, flags, eps_max, j_max)


def gradient_bounds(model, theta_lo, theta_hi, t_range, gamma, n_samples=2000, rng=None):
    """Sample ``K``-weighted gradient norms over a parameter box and time interval.

    ``a = |grad m|_K``, ``b = |grad M|_K`` and ``c = |<grad m, grad M>_K|``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    lo = np.asarray(theta_lo, dtype=float)
    hi = np.asarray(theta_hi, dtype=float)
    K = np.broadcast_to(np.asarray(gamma, dtype=float), lo.shape)
    th = lo + (hi - lo) * rng.random((n_samples, len(lo)))
    ts = t_range[0] + (t_range[1] - t_range[0]) * rng.random(n_samples)
    a = np.empty(n_samples)
    b = np.empty(n_samples)
    c = np.empty(n_samples)
    for i in range(n_samples):
        gm = model.grad_mass(th[i], ts[i])
        gM = model.grad_rate(th[i], ts[i])
        a[i] = np.sqrt(gm @ (K * gm))
        b[i] = np.sqrt(gM @ (K * gM))
        c[i] = abs(gm @ (K * gM))
    return ExcitationBounds(a.min(), a.max(), b.min(), b.max(), c.max())


REPORT_COLUMNS = ["t_start", "int_lmin", "int_lmin_pos", "S11_int", "S22_int", "det_int",
                  "H_drift", "eps_max", "jerk_max", "verdicts"]


def write_window_report(path, reports: List[WindowReport]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            d = asdict(r)
            verdict = ";".join(f"{k}={'pass' if v else 'fail'}" for k, v in r.verdicts.items() if v is not None)
            w.writerow([f"{d[c]:.10g}" for c in REPORT_COLUMNS[:-1]] + [verdict])
