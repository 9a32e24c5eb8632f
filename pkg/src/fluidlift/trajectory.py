"""Reference trajectories: clamped cubic splines, splines in tension, minimum-jerk quintics, dither.

Tension segments use the basis ``{1, s, (cosh(ks) - 1)/k^2, (sinh(ks) - ks)/k^3}``
with ``k = sqrt(tau)``, written through series-safe helpers so that ``k = 0``
gives the cubic basis exactly. For ``k h > 4`` the two hyperbolic functions
are replaced by decaying exponentials anchored at each segment end.
"""
import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import CapExceeded, DegenerateKnots

MIN_DT = 1e-6
LARGE_KH = 4.0
SERIES_Z = 0.1
DEFAULT_PHASES = (0.0, 2.0 * np.pi / 3.0, 4.0 * np.pi / 3.0)


@dataclass
class Waypoints:
    t: np.ndarray
    x: np.ndarray
    v0: Optional[np.ndarray] = None
    v1: Optional[np.ndarray] = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float).reshape(len(self.t), 3)
        if len(self.t) < 2:
            raise ValueError("need at least two knots")
        if np.any(np.diff(self.t) < MIN_DT):
            raise DegenerateKnots(f"knot spacing below {MIN_DT:g} s or not increasing")
        self.v0 = np.zeros(3) if self.v0 is None else np.asarray(self.v0, dtype=float)
        self.v1 = np.zeros(3) if self.v1 is None else np.asarray(self.v1, dtype=float)


def _series(z2, start):
    # sum_{n>=0} z^{2n} / (2n + start)!
    out = np.zeros_like(z2)
    term = np.full_like(z2, 1.0 / math.factorial(start))
    n = start
    for _ in range(8):
        out = out + term
        term = term * z2 / ((n + 1) * (n + 2))
        n += 2
    return out


def _sinhc(z):
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < SERIES_Z
    zs = np.where(small, 1.0, z)
    return np.where(small, _series(z * z, 1), np.sinh(zs) / zs)


def _c2(z):
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < SERIES_Z
    zs = np.where(small, 1.0, z)
    return np.where(small, _series(z * z, 2), (np.cosh(zs) - 1.0) / (zs * zs))


def _c3(z):
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < SERIES_Z
    zs = np.where(small, 1.0, z)
    return np.where(small, _series(z * z, 3), (np.sinh(zs) - zs) / zs ** 3)


def _tension_basis(s, k, h):
    """Basis values and derivatives 0..4 at local times ``s``; shape (5, len(s), 4)."""
    s = np.asarray(s, dtype=float)
    B = np.zeros((5, s.size, 4))
    B[0, :, 0] = 1.0
    B[0, :, 1] = s
    B[1, :, 1] = 1.0
    if k * h > LARGE_KH:
        ea = np.exp(-k * (h - s)) / (k * k)
        eb = np.exp(-k * s) / (k * k)
        for n in range(5):
            B[n, :, 2] = k ** n * ea
            B[n, :, 3] = (-k) ** n * eb
        return B
    z = k * s
    ch = np.cosh(z)
    shc = _sinhc(z)
    c2 = _c2(z)
    B[0, :, 2] = s * s * c2
    B[1, :, 2] = s * shc
    B[2, :, 2] = ch
    B[3, :, 2] = k * k * s * shc
    B[4, :, 2] = k * k * ch
    B[0, :, 3] = s ** 3 * _c3(z)
    B[1, :, 3] = s * s * c2
    B[2, :, 3] = s * shc
    B[3, :, 3] = ch
    B[4, :, 3] = k * k * s * shc
    return B


def _quintic_basis(s):
    s = np.asarray(s, dtype=float)
    B = np.zeros((5, s.size, 6))
    for p in range(6):
        for n in range(5):
            if p >= n:
                c = np.prod(np.arange(p - n + 1, p + 1)) if n else 1.0
                B[n, :, p] = c * s ** (p - n)
    return B


@dataclass
class Segment:
    t0: float
    t1: float
    kind: str
    coeffs: np.ndarray  # (nbasis, 3)
    k: float = 0.0

    def basis(self, s):
        if self.kind == "quintic":
            return _quintic_basis(s)
        return _tension_basis(s, self.k, self.t1 - self.t0)


@dataclass
class Dither:
    amplitudes: np.ndarray
    freqs: np.ndarray
    phases: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_PHASES))

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=float).reshape(3)
        self.freqs = np.atleast_1d(np.asarray(self.freqs, dtype=float))
        self.phases = np.asarray(self.phases, dtype=float).reshape(3)

    def derivs(self, t, order):
        """n-th time derivative of the dither at times ``t``; shape (len(t), 3)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros((t.size, 3))
        for w in self.freqs:
            arg = w * t[:, None] + self.phases[None, :]
            out += self.amplitudes * w ** order * np.sin(arg + 0.5 * np.pi * order)
        return out

    def peak_accel(self):
        return np.abs(self.amplitudes) * np.sum(self.freqs ** 2)


@dataclass(frozen=True)
class TrajectoryPlan:
    segments: tuple
    kind: str
    tau: float = 0.0
    dither: Optional[Dither] = None
    report: Optional[dict] = None

    @property
    def t0(self):
        return self.segments[0].t0

    @property
    def t1(self):
        return self.segments[-1].t1

    def evaluate(self, t, order=3):
        """Position and derivatives up to ``order`` (<= 4); returns a list of (len(t), 3) arrays.

        Times outside the knot range hold the end state (zero rates).
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        starts = np.array([s.t0 for s in self.segments])
        idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(self.segments) - 1)
        out = [np.zeros((t.size, 3)) for _ in range(order + 1)]
        for i in np.unique(idx):
            seg = self.segments[i]
            sel = idx == i
            s = np.clip(t[sel], seg.t0, seg.t1) - seg.t0
            B = seg.basis(s)
            for n in range(order + 1):
                out[n][sel] = B[n] @ seg.coeffs
        outside = (t < self.t0) | (t > self.t1)
        for n in range(1, order + 1):
            out[n][outside] = 0.0
        if self.dither is not None:
            for n in range(order + 1):
                out[n] += self.dither.derivs(t, n)
        return out

    def reference(self, t):
        """``(x, v, a)`` at a single time."""
        x, v, a = self.evaluate([t], order=2)
        return x[0], v[0], a[0]

    def to_csv(self, path, t):
        x, v, a, j = self.evaluate(t, order=3)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            head = ["t"]
            for name in ("x", "xdot", "xddot", "xdddot"):
                head += [f"{name}_{ax}" for ax in "xyz"]
            w.writerow(head)
            for i, ti in enumerate(np.atleast_1d(t)):
                w.writerow([f"{ti:.10g}"] + [f"{val:.12e}" for arr in (x, v, a, j) for val in arr[i]])


def tension_spline(wp: Waypoints, tau: float) -> TrajectoryPlan:
    """Clamped spline in tension with ``C^2`` knots (``tau = 0`` gives the cubic spline)."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    k = float(np.sqrt(tau))
    t, x = wp.t, wp.x
    n = len(t) - 1
    h = np.diff(t)
    # per segment: coefficients map (x0, x1, v0, v1) -> c, and end second derivatives
    maps, acc = [], []
    for i in range(n):
        B = _tension_basis(np.array([0.0, h[i]]), k, h[i])
        M = np.array([B[0, 0], B[0, 1], B[1, 0], B[1, 1]])
        Minv = np.linalg.inv(M)
        maps.append(Minv)
        acc.append(np.array([B[2, 0], B[2, 1]]) @ Minv)  # rows: x''(0), x''(h) vs data
    # unknown interior velocities v_1..v_{n-1}; second-derivative continuity at each
    v = np.zeros((n + 1, 3))
    v[0], v[n] = wp.v0, wp.v1
    if n > 1:
        A = np.zeros((n - 1, n - 1))
        rhs = np.zeros((n - 1, 3))
        for i in range(1, n):
            L, R = acc[i - 1][1], acc[i][0]  # x''(h) of left seg, x''(0) of right seg
            r = i - 1
            # left data (x_{i-1}, x_i, v_{i-1}, v_i); right data (x_i, x_{i+1}, v_i, v_{i+1})
            A[r, r] += L[3] - R[2]
            rhs[r] -= L[0] * x[i - 1] + L[1] * x[i] - R[0] * x[i] - R[1] * x[i + 1]
            if i - 1 >= 1:
                A[r, r - 1] += L[2]
            else:
                rhs[r] -= L[2] * v[0]
            if i + 1 <= n - 1:
                A[r, r + 1] -= R[3]
            else:
                rhs[r] += R[3] * v[n]
        v[1:n] = np.linalg.solve(A, rhs)
    segs = []
    for i in range(n):
        d = np.array([x[i], x[i + 1], v[i], v[i + 1]])
        segs.append(Segment(t[i], t[i + 1], "cubic" if k == 0 else "tension", maps[i] @ d, k))
    return TrajectoryPlan(tuple(segs), "cubic" if k == 0 else "tension", tau)


def cubic_spline(wp: Waypoints) -> TrajectoryPlan:
    return tension_spline(wp, 0.0)


def min_jerk_quintic(wp: Waypoints) -> TrajectoryPlan:
    """Rest-to-rest quintic on every knot interval (zero velocity and acceleration at knots)."""
    segs = []
    for i in range(len(wp.t) - 1):
        h = wp.t[i + 1] - wp.t[i]
        dx = wp.x[i + 1] - wp.x[i]
        c = np.zeros((6, 3))
        c[0] = wp.x[i]
        c[3] = 10.0 * dx / h ** 3
        c[4] = -15.0 * dx / h ** 4
        c[5] = 6.0 * dx / h ** 5
        segs.append(Segment(wp.t[i], wp.t[i + 1], "quintic", c))
    return TrajectoryPlan(tuple(segs), "quintic")


def hover_plan(x=(0.0, 0.0, 0.0), horizon=1.0) -> TrajectoryPlan:
    wp = Waypoints([0.0, horizon], [x, x])
    return cubic_spline(wp)


def tension_from_mass_rate(model, theta, t0, t1, n=201):
    """``tau = mean(alpha)^2`` with ``alpha = mdot / m``, and ``sup|alpha_dot| (t1 - t0)``."""
    ts = np.linspace(t0, t1, n)
    m = np.array([model.mass(theta, s) for s in ts])
    if np.any(m <= 0):
        raise ValueError("mass must stay positive over the window")
    md = np.array([model.rate(theta, s) for s in ts])
    mdd = np.array([model.accel(theta, s) for s in ts])
    alpha = md / m
    alpha_dot = (mdd * m - md * md) / (m * m)
    tau = float(np.trapezoid(alpha, ts) / (t1 - t0)) ** 2
    return tau, float(np.max(np.abs(alpha_dot)) * (t1 - t0))


def add_dither(plan, amplitudes, freqs, phases=DEFAULT_PHASES, accel_cap=None, freq_cap=None,
               pe_T=2.0, n_samples=None, g=9.81):
    """Superimpose ``a_i sin(w t + phi_i)`` per axis and report the windowed PE integral.

    The report holds the worst-window integral of ``|a + g e3|^2`` before and
    after dithering, sampled at 1 ms on the plan span.
    """
    from .excitation import constant_mass_pe

    d = Dither(amplitudes, freqs, phases)
    if freq_cap is not None and np.any(np.abs(d.freqs) > freq_cap):
        raise CapExceeded(f"dither frequency {np.max(np.abs(d.freqs)):.3g} rad/s above cap {freq_cap:.3g}")
    if accel_cap is not None and np.any(d.peak_accel() > accel_cap):
        raise CapExceeded(f"implied dither acceleration {np.max(d.peak_accel()):.3g} m/s^2 above cap {accel_cap:.3g}")
    if plan.dither is not None:
        raise ValueError("plan already carries a dither")
    new = replace(plan, dither=d)
    report = None
    span = plan.t1 - plan.t0
    if pe_T is not None and span >= pe_T:
        n = n_samples or max(int(round(span / 1e-3)) + 1, 200)
        ts = np.linspace(plan.t0, plan.t1, n)
        before = constant_mass_pe(ts, plan.evaluate(ts, 2)[2], 0.0, pe_T, g)
        after = constant_mass_pe(ts, new.evaluate(ts, 2)[2], 0.0, pe_T, g)
        report = {"pe_T": pe_T, "worst_before": before.worst, "worst_after": after.worst}
    return replace(new, report=report)
