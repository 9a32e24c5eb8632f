"""Tank-plus-fluid inertia under a planar free surface, and its look-up table.

The cavity is discretised into axis-aligned voxels (midpoint rule). A voxel
cut by the free surface contributes the fraction of its extent along the
up direction that lies below the plane, linearised as a ramp of width
``sum_i |u_i| dx_i``; this is exact for axis-aligned planes.

Fluid occupies ``{x : u . x <= h}`` with ``u = R_L^T e3`` the body-frame up
direction, i.e. the side opposite to body-frame gravity ``g_L = -u``.
"""
import hashlib
import json
import struct
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import MassBelowEmpty
from .manifold import E3

LUT_MAGIC = b"ALUT"
LUT_VERSION = 1
VOLUME_TOL = 1e-4
MAX_BISECT = 60
CLAMP_WARN = 0.01
HALF_SPACE = "up-normal"  # fluid below the plane normal to body-frame up


@dataclass(frozen=True)
class TankGeometry:
    """Closed cavity in the load body frame with uniform tank mass spread over it.

    ``shape`` is one of ``box`` (``size=(a, b, c)``), ``cylinder``
    (``radius``, ``height``, axis along body z), ``sphere`` (``radius``) or
    ``voxels`` (boolean ``occupancy`` grid spanning ``[lo, hi]``). Primitives
    are centred at ``center``; ``reference`` is the point O about which
    moments are taken (defaults to ``center``).
    """
    shape: str
    empty_mass: float
    density: float
    size: tuple = ()
    radius: float = 0.0
    height: float = 0.0
    center: tuple = (0.0, 0.0, 0.0)
    reference: Optional[tuple] = None
    occupancy: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    lo: tuple = ()
    hi: tuple = ()

    def __post_init__(self):
        if self.shape not in ("box", "cylinder", "sphere", "voxels"):
            raise ValueError(f"unknown tank shape {self.shape!r}")
        if self.empty_mass <= 0 or self.density <= 0:
            raise ValueError("empty_mass and density must be positive")
        if self.shape == "box" and (len(self.size) != 3 or min(self.size) <= 0):
            raise ValueError("box needs three positive side lengths")
        if self.shape in ("cylinder", "sphere") and self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.shape == "cylinder" and self.height <= 0:
            raise ValueError("height must be positive")
        if self.shape == "voxels":
            occ = np.asarray(self.occupancy, dtype=bool)
            if occ.ndim != 3 or not occ.any():
                raise ValueError("occupancy must be a non-empty 3-D boolean grid")
            object.__setattr__(self, "occupancy", occ)
            if np.any(np.asarray(self.hi) <= np.asarray(self.lo)):
                raise ValueError("voxel bounds need hi > lo")

    @property
    def origin(self):
        return np.asarray(self.reference if self.reference is not None else self.center, dtype=float)

    def bounds(self):
        c = np.asarray(self.center, dtype=float)
        if self.shape == "box":
            half = 0.5 * np.asarray(self.size, dtype=float)
        elif self.shape == "cylinder":
            half = np.array([self.radius, self.radius, 0.5 * self.height])
        elif self.shape == "sphere":
            half = np.full(3, self.radius)
        else:
            return np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)
        return c - half, c + half

    def contains(self, p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        d = p - np.asarray(self.center, dtype=float)
        if self.shape == "box":
            return np.all(np.abs(d) <= 0.5 * np.asarray(self.size), axis=1)
        if self.shape == "cylinder":
            return (d[:, 0] ** 2 + d[:, 1] ** 2 <= self.radius ** 2) & (np.abs(d[:, 2]) <= 0.5 * self.height)
        if self.shape == "sphere":
            return np.sum(d * d, axis=1) <= self.radius ** 2
        lo, hi = self.bounds()
        n = np.array(self.occupancy.shape)
        idx = np.floor((p - lo) / (hi - lo) * n).astype(int)
        inside = np.all((idx >= 0) & (idx < n), axis=1)
        out = np.zeros(len(p), dtype=bool)
        ii = idx[inside]
        out[inside] = self.occupancy[ii[:, 0], ii[:, 1], ii[:, 2]]
        return out

    def analytic_volume(self):
        if self.shape == "box":
            return float(np.prod(self.size))
        if self.shape == "cylinder":
            return float(np.pi * self.radius ** 2 * self.height)
        if self.shape == "sphere":
            return float(4.0 / 3.0 * np.pi * self.radius ** 3)
        lo, hi = self.bounds()
        return float(self.occupancy.sum() * np.prod((hi - lo) / np.array(self.occupancy.shape)))

    def to_dict(self):
        fl = lambda v: [float(x) for x in v]
        d = {"shape": self.shape, "empty_mass": float(self.empty_mass), "density": float(self.density),
             "center": fl(self.center)}
        if self.reference is not None:
            d["reference"] = fl(self.reference)
        if self.shape == "box":
            d["size"] = fl(self.size)
        elif self.shape == "cylinder":
            d.update(radius=float(self.radius), height=float(self.height))
        elif self.shape == "sphere":
            d["radius"] = float(self.radius)
        else:
            d.update(lo=fl(self.lo), hi=fl(self.hi), occupancy_shape=list(self.occupancy.shape),
                     occupancy_sha256=hashlib.sha256(np.packbits(self.occupancy).tobytes()).hexdigest())
        return d

    def hash(self):
        """32-byte digest identifying the geometry and mass properties."""
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).digest()

    @classmethod
    def from_dict(cls, d, base_dir=None):
        d = dict(d)
        shape = d.pop("shape")
        kw = dict(shape=shape, empty_mass=float(d.pop("empty_mass")), density=float(d.pop("density")))
        if "center" in d:
            kw["center"] = tuple(float(x) for x in d.pop("center"))
        if d.get("reference") is not None:
            kw["reference"] = tuple(float(x) for x in d.pop("reference"))
        d.pop("reference", None)
        if shape == "box":
            kw["size"] = tuple(float(x) for x in d.pop("size"))
        elif shape == "cylinder":
            kw["radius"], kw["height"] = float(d.pop("radius")), float(d.pop("height"))
        elif shape == "sphere":
            kw["radius"] = float(d.pop("radius"))
        elif shape == "voxels":
            import os
            path = d.pop("occupancy_file")
            if base_dir is not None and not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            kw["occupancy"] = np.load(path).astype(bool)
            kw["lo"] = tuple(float(x) for x in d.pop("lo"))
            kw["hi"] = tuple(float(x) for x in d.pop("hi"))
        return cls(**kw)


class Quadrature:
    """Voxel centres (relative to O) and volumes for one tank at one resolution."""

    def __init__(self, tank, resolution):
        if resolution < 2:
            raise ValueError("resolution must be at least 2")
        lo, hi = tank.bounds()
        ext = hi - lo
        if tank.shape == "voxels":
            n = np.array(tank.occupancy.shape)
        else:
            d = ext.max() / resolution
            n = np.maximum(1, np.round(ext / d)).astype(int)
        self.dx = ext / n
        axes = [lo[i] + (np.arange(n[i]) + 0.5) * self.dx[i] for i in range(3)]
        X, Y, Z = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
        if tank.shape == "voxels":
            keep = tank.occupancy.ravel()
        else:
            keep = tank.contains(pts)
        self.x = pts[keep] - tank.origin
        self.dV = float(np.prod(self.dx))
        self.volume = self.dV * len(self.x)
        self.first = self.dV * self.x.sum(axis=0)
        self.second = self.dV * _second_moment_sum(self.x)
        self.resolution = resolution

    def ramp_width(self, u):
        return float(np.abs(u) @ self.dx)

    def weights(self, u, h):
        s = self.x @ u
        w = self.ramp_width(u)
        return np.clip((h - s) / w + 0.5, 0.0, 1.0)


def _second_moment_sum(x, w=None):
    """``sum_i w_i (|x_i|^2 I - x_i x_i^T)``."""
    if w is None:
        C = x.T @ x
    else:
        C = (x * w[:, None]).T @ x
    return np.trace(C) * np.eye(3) - C


@lru_cache(maxsize=8)
def _cached_quadrature(tank, resolution):
    return Quadrature(tank, resolution)


def quadrature(tank, resolution):
    if tank.shape == "voxels":
        return Quadrature(tank, resolution)
    return _cached_quadrature(tank, resolution)


def cavity_volume(tank, resolution=64):
    return quadrature(tank, resolution).volume


def fill_level(m_hat, tank, volume=None, resolution=64):
    """Fill fraction from mass, clamped to ``[0, 1]`` with a warning beyond 1% overshoot."""
    V = cavity_volume(tank, resolution) if volume is None else volume
    m_T = tank.empty_mass
    if m_hat < m_T * (1.0 - 1e-3):
        raise MassBelowEmpty(f"mass {m_hat:.6g} kg below empty tank mass {m_T:.6g} kg")
    sigma = (m_hat - m_T) / (tank.density * V)
    if sigma > 1.0 + CLAMP_WARN:
        warnings.warn(f"fill level {sigma:.4f} clamped to 1", RuntimeWarning, stacklevel=2)
    return float(min(max(sigma, 0.0), 1.0))


@dataclass
class FluidConfig:
    sigma: float
    g_dir: np.ndarray
    h_star: float
    V_F: float
    residual: float = 0.0

    @property
    def up(self):
        return -np.asarray(self.g_dir, dtype=float)


class _SortedSlab:
    """Voxels sorted along one direction, for repeated plane solves along it.

    With prefix sums of the sorted heights ``s_i``, the ramp-weighted volume
    below ``h`` costs two binary searches, so the bisection runs vectorised
    over many fill levels at once.
    """

    def __init__(self, quad, u):
        self.quad = quad
        self.u = np.asarray(u, dtype=float) / np.linalg.norm(u)
        s = quad.x @ self.u
        self.order = np.argsort(s, kind="stable")
        self.s = s[self.order]
        self.S = np.concatenate([[0.0], np.cumsum(self.s)])
        self.w = quad.ramp_width(self.u)
        self.lo = self.s[0] - 0.5 * self.w
        self.hi = self.s[-1] + 0.5 * self.w

    def band(self, h):
        """Index bounds ``(a, b)``: voxels ``< a`` are fully below ``h``, ``[a, b)`` are cut."""
        a = np.searchsorted(self.s, h - 0.5 * self.w, side="right")
        b = np.searchsorted(self.s, h + 0.5 * self.w, side="left")
        return a, b

    def count(self, h):
        """Number of voxel volumes below ``h`` (fractional for cut voxels)."""
        h = np.asarray(h, dtype=float)
        a, b = self.band(h)
        return a + (b - a) * (h / self.w + 0.5) - (self.S[b] - self.S[a]) / self.w

    def volume(self, h):
        return self.quad.dV * self.count(h)

    def solve(self, sigma):
        """Plane offsets and volume residuals for scalar or array ``sigma``."""
        sig = np.atleast_1d(np.asarray(sigma, dtype=float))
        target = sig * self.quad.volume
        a = np.full(sig.shape, self.lo)
        b = np.full(sig.shape, self.hi)
        tol = 1e-13 * max(1.0, self.hi - self.lo)
        for _ in range(MAX_BISECT):
            m = 0.5 * (a + b)
            below = self.volume(m) < target
            a = np.where(below, m, a)
            b = np.where(below, b, m)
            if np.all(b - a < tol):
                break
        h = 0.5 * (a + b)
        h = np.where(sig <= 0, self.lo, np.where(sig >= 1, self.hi, h))
        res = self.volume(h) - target
        if np.ndim(sigma) == 0:
            return float(h[0]), float(res[0])
        return h, res


def solve_plane_offset(tank, sigma, g_dir, resolution=64):
    """Offset ``h`` with ``Vol{x in cavity : -g_dir . x <= h} = sigma V_T`` (coordinates relative to O)."""
    if not 0.0 <= sigma <= 1.0:
        raise ValueError("sigma must lie in [0, 1]")
    slab = _SortedSlab(quadrature(tank, resolution), -np.asarray(g_dir, dtype=float))
    h, _ = slab.solve(sigma)
    return h


def fluid_config(tank, sigma, g_dir, resolution=64):
    quad = quadrature(tank, resolution)
    g_dir = np.asarray(g_dir, dtype=float) / np.linalg.norm(g_dir)
    slab = _SortedSlab(quad, -g_dir)
    h, res = slab.solve(sigma)
    return FluidConfig(sigma, g_dir, h, sigma * quad.volume, res)


def fluid_moments(tank, config, resolution=64):
    """Fluid volume, centroid (relative to O) and ``J_F`` about O (density-weighted)."""
    quad = quadrature(tank, resolution)
    if config.sigma >= 1.0:
        V, first, second = quad.volume, quad.first, quad.second
    elif config.sigma <= 0.0:
        return 0.0, np.zeros(3), np.zeros((3, 3))
    else:
        w = quad.weights(config.up, config.h_star)
        V = quad.dV * w.sum()
        first = quad.dV * (w @ quad.x)
        second = quad.dV * _second_moment_sum(quad.x, w)
    return V, first / V, tank.density * second


def _combine(tank, m_hat, V_T, first_T, second_T, V_F, first_F, J_F):
    """Total inertia about the combined centre of mass, plus that centre (relative to O)."""
    m_T = tank.empty_mass
    O_cm = (m_T / (m_hat * V_T)) * first_T
    if V_F > 0:
        O_cm = O_cm + ((m_hat - m_T) / (m_hat * V_F)) * first_F
    J_T = (m_T / V_T) * second_T
    J = J_T + J_F - m_hat * (float(O_cm @ O_cm) * np.eye(3) - np.outer(O_cm, O_cm))
    return 0.5 * (J + J.T), O_cm


def load_inertia(tank, config, m_hat, resolution=64):
    quad = quadrature(tank, resolution)
    V_F, c_F, J_F = fluid_moments(tank, config, resolution)
    return _combine(tank, m_hat, quad.volume, quad.first, quad.second, V_F, V_F * c_F, J_F)


def direct_inertia(tank, m_hat, R_L=None, g_dir=None, resolution=128):
    """Convenience: fill level, plane solve and combined inertia in one call."""
    if g_dir is None:
        R_L = np.eye(3) if R_L is None else np.asarray(R_L, dtype=float)
        g_dir = -R_L.T @ E3
    V_T = cavity_volume(tank, resolution)
    sigma = fill_level(m_hat, tank, V_T)
    cfg = fluid_config(tank, sigma, g_dir, resolution)
    return load_inertia(tank, cfg, m_hat, resolution)


def sphere_direction(theta, phi):
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def direction_angles(g):
    g = np.asarray(g, dtype=float) / np.linalg.norm(g)
    theta = float(np.arccos(np.clip(g[2], -1.0, 1.0)))
    phi = float(np.arctan2(g[1], g[0]) % (2.0 * np.pi))
    return theta, phi


@dataclass
class InertiaLut:
    sigma: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    J6: np.ndarray      # (n_sigma, n_theta, n_phi, 6) upper triangle xx, xy, xz, yy, yz, zz
    O_cm: np.ndarray    # (n_sigma, n_theta, n_phi, 3)
    m_T: float
    rho: float
    V_T: float
    tank_hash: bytes
    resolution: int = 0
    residuals: Optional[np.ndarray] = None
    version: int = LUT_VERSION
    half_space: str = HALF_SPACE

    @property
    def shape(self):
        return self.J6.shape[:3]

    def node(self, i, j, k):
        return _from6(self.J6[i, j, k]), self.O_cm[i, j, k]


_IU = np.triu_indices(3)


def _to6(J):
    return np.asarray(J)[..., _IU[0], _IU[1]]


def _from6(a):
    a = np.asarray(a, dtype=float)
    J = np.empty(a.shape[:-1] + (3, 3))
    J[..., 0, 0], J[..., 0, 1], J[..., 0, 2] = a[..., 0], a[..., 1], a[..., 2]
    J[..., 1, 1], J[..., 1, 2], J[..., 2, 2] = a[..., 3], a[..., 4], a[..., 5]
    J[..., 1, 0], J[..., 2, 0], J[..., 2, 1] = a[..., 1], a[..., 2], a[..., 4]
    return J


def _direction_column(tank, resolution, sigma_axis, g):
    """All fill levels for one gravity direction: (J6, O_cm, residual) arrays.

    Fill levels are processed in increasing order so the fully submerged
    voxel set only grows; its moments are accumulated segment by segment
    and the cut band is weighted explicitly.
    """
    quad = quadrature(tank, resolution)
    slab = _SortedSlab(quad, -g)
    x = quad.x[slab.order]
    sigma_axis = np.asarray(sigma_axis, dtype=float)
    hs, res = slab.solve(sigma_axis)
    out6 = np.zeros((len(sigma_axis), 6))
    outc = np.zeros((len(sigma_axis), 3))
    done = 0
    first_in = np.zeros(3)
    second_in = np.zeros((3, 3))
    for i in np.argsort(sigma_axis, kind="stable"):
        sg = sigma_axis[i]
        m_hat = tank.empty_mass + sg * tank.density * quad.volume
        if sg >= 1.0:
            V_F, first_F, J_F = quad.volume, quad.first, tank.density * quad.second
            res[i] = 0.0
        elif sg <= 0.0:
            V_F, first_F, J_F = 0.0, np.zeros(3), np.zeros((3, 3))
            res[i] = 0.0
        else:
            h = hs[i]
            a, b = slab.band(h)
            if a > done:
                seg = x[done:a]
                first_in += seg.sum(axis=0)
                second_in += seg.T @ seg
                done = a
            wb = np.clip((h - slab.s[a:b]) / slab.w + 0.5, 0.0, 1.0)
            xb = x[a:b]
            V_F = quad.dV * (a + wb.sum())
            first_F = quad.dV * (first_in + wb @ xb)
            M2 = second_in + (xb * wb[:, None]).T @ xb
            J_F = tank.density * quad.dV * (np.trace(M2) * np.eye(3) - M2)
        J, c = _combine(tank, m_hat, quad.volume, quad.first, quad.second, V_F, first_F, J_F)
        out6[i] = _to6(J)
        outc[i] = c
    return out6, outc, res


def _column_task(args):
    tank, resolution, sigma_axis, g = args
    return _direction_column(tank, resolution, sigma_axis, g)


def build_lut(tank, n_sigma=21, n_theta=13, n_phi=24, resolution=64, workers=1):
    """Tabulate the load inertia over fill level and body-frame gravity direction.

    Polar rows at ``theta = 0`` and ``theta = pi`` repeat the same direction
    for every azimuth; they are computed once and copied.
    """
    if min(n_sigma, n_theta, n_phi) < 2:
        raise ValueError("grid sizes must be at least 2")
    quad = quadrature(tank, resolution)
    sigma_axis = np.linspace(0.0, 1.0, n_sigma)
    theta = np.linspace(0.0, np.pi, n_theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    tasks, where = [], []
    for j, th in enumerate(theta):
        pole = j == 0 or j == n_theta - 1
        for k, ph in enumerate(phi[:1] if pole else phi):
            g = np.array([0.0, 0.0, np.cos(th)]) if pole else sphere_direction(th, ph)
            tasks.append((tank, resolution, sigma_axis, g))
            where.append((j, None if pole else k))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_column_task, tasks))
    else:
        results = [_column_task(t) for t in tasks]
    J6 = np.zeros((n_sigma, n_theta, n_phi, 6))
    O = np.zeros((n_sigma, n_theta, n_phi, 3))
    R = np.zeros((n_sigma, n_theta, n_phi))
    for (j, k), (a6, c, r) in zip(where, results):
        ks = slice(None) if k is None else k
        if k is None:
            J6[:, j, :, :] = a6[:, None, :]
            O[:, j, :, :] = c[:, None, :]
            R[:, j, :] = r[:, None]
        else:
            J6[:, j, ks], O[:, j, ks], R[:, j, ks] = a6, c, r
    return InertiaLut(sigma_axis, theta, phi, J6, O, tank.empty_mass, tank.density, quad.volume,
                      tank.hash(), resolution, R)


def _bracket(axis, x):
    n = len(axis)
    i = min(max(int(np.searchsorted(axis, x, side="right")) - 1, 0), n - 2)
    f = (x - axis[i]) / (axis[i + 1] - axis[i])
    return i, min(max(float(f), 0.0), 1.0)


@dataclass
class LutSample:
    J: np.ndarray
    Jdot: np.ndarray
    O_cm: np.ndarray
    sigma: float


def _about_origin(lut):
    """Node moments about O as ``[J_O in 6-form, first moment m c]`` rows; cached on the table."""
    cache = getattr(lut, "_origin_cache", None)
    if cache is None:
        m = lut.m_T + lut.sigma * lut.rho * lut.V_T
        c = lut.O_cm
        shift = np.einsum("...i,...i->...", c, c)[..., None, None] * np.eye(3) - c[..., :, None] * c[..., None, :]
        JO = _from6(lut.J6) + m[:, None, None, None, None] * shift
        # one (6 + 3)-vector per node so a single gather serves both moments
        cache = np.concatenate([_to6(JO), m[:, None, None, None] * c], axis=-1)
        lut._origin_cache = cache
    return cache


def interpolate(lut, sigma, g_dir):
    """Trilinear interpolation over (sigma, theta, phi) with azimuthal wrap.

    Second and first moments about O are interpolated and the result is then
    shifted to the interpolated centre of mass. Both are affine in the node
    masses, so the output is the inertia of a positive mass mixture and stays
    positive definite; at nodes the stored values are reproduced.
    """
    nodes = _about_origin(lut)
    th, ph = direction_angles(g_dir)
    i, fs = _bracket(lut.sigma, sigma)
    j, ft = _bracket(lut.theta, th)
    n_phi = len(lut.phi)
    kf = ph / (2.0 * np.pi / n_phi)
    k = int(np.floor(kf)) % n_phi
    fp = kf - np.floor(kf)
    k2 = (k + 1) % n_phi
    ii = [i, i, i, i, i + 1, i + 1, i + 1, i + 1]
    jj = [j, j, j + 1, j + 1, j, j, j + 1, j + 1]
    kk = [k, k2, k, k2, k, k2, k, k2]
    ws, wt, wp = (1 - fs, fs), (1 - ft, ft), (1 - fp, fp)
    w = np.array([ws[a] * wt[b] * wp[c] for a in (0, 1) for b in (0, 1) for c in (0, 1)])
    acc = w @ nodes[ii, jj, kk]
    acc6, accp = acc[:6], acc[6:]
    m = lut.m_T + ((1 - fs) * lut.sigma[i] + fs * lut.sigma[i + 1]) * lut.rho * lut.V_T
    c = accp / m
    J = _from6(acc6) - m * (float(c @ c) * np.eye(3) - np.outer(c, c))
    return J, c


def query(lut, m_hat, R_L, prev=None, dt=None):
    """Inertia, its backward-difference rate and centre of mass at estimated mass and attitude.

    ``prev`` is the previous query's :class:`LutSample`; without it the rate is zero.
    """
    if m_hat < lut.m_T * (1.0 - 1e-3):
        raise MassBelowEmpty(f"mass {m_hat:.6g} kg below empty tank mass {lut.m_T:.6g} kg")
    sigma = (m_hat - lut.m_T) / (lut.rho * lut.V_T)
    if sigma > 1.0 + CLAMP_WARN:
        warnings.warn(f"fill level {sigma:.4f} clamped to 1", RuntimeWarning, stacklevel=2)
    sigma = min(max(sigma, 0.0), 1.0)
    g = -np.asarray(R_L, dtype=float).T @ E3
    J, c = interpolate(lut, sigma, g)
    J = 0.5 * (J + J.T)
    if prev is not None and dt:
        Jdot = (J - prev.J) / dt
    else:
        Jdot = np.zeros((3, 3))
    return LutSample(J, Jdot, c, sigma)


_HEADER = struct.Struct("<4sIIIIddd32s")


def save_lut(lut, path):
    ns, nt, npf = lut.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(LUT_MAGIC, LUT_VERSION, ns, nt, npf, lut.m_T, lut.rho, lut.V_T, lut.tank_hash))
        rec = np.concatenate([lut.J6, lut.O_cm], axis=-1).astype("<f8")
        fh.write(np.ascontiguousarray(rec).tobytes())


def load_lut(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError("truncated LUT file")
    magic, ver, ns, nt, npf, m_T, rho, V_T, h = _HEADER.unpack_from(raw)
    if magic != LUT_MAGIC:
        raise ValueError("not a LUT file (bad magic)")
    if ver != LUT_VERSION:
        raise ValueError(f"unsupported LUT version {ver}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != ns * nt * npf * 9:
        raise ValueError("LUT body size does not match header")
    rec = body.reshape(ns, nt, npf, 9).astype(float)
    return InertiaLut(np.linspace(0.0, 1.0, ns), np.linspace(0.0, np.pi, nt),
                      2.0 * np.pi * np.arange(npf) / npf, rec[..., :6].copy(), rec[..., 6:].copy(),
                      m_T, rho, V_T, h)


def upright_schedule(tank, sigma_nodes=101, resolution=64):
    """Inertia versus fill level with the load level, as a smooth callable of mass.

    Returns ``f(m) -> (J, dJ/dm)`` built from a cubic spline through the nodes.
    """
    from scipy.interpolate import CubicSpline

    quad = quadrature(tank, resolution)
    s = np.linspace(0.0, 1.0, sigma_nodes)
    J6, _, _ = _direction_column(tank, resolution, s, -E3)
    masses = tank.empty_mass + s * tank.density * quad.volume
    spl = CubicSpline(masses, J6, axis=0)
    dspl = spl.derivative()
    lo, hi = masses[0], masses[-1]

    def f(m):
        mc = min(max(m, lo), hi)
        d = dspl(mc) if lo < m < hi else np.zeros(6)
        return _from6(spl(mc)), _from6(d)

    return f
