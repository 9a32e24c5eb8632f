"""SO(3) and S^2 primitives.

Every function here is pure and works on plain numpy arrays: rotations are
3x3 matrices, unit vectors and rates are length-3 vectors.
"""
import numpy as np

from .errors import NonSkew

SMALL_ANGLE = 1e-8
# below this the batch maps use short Taylor series instead of trigonometry
SERIES_ANGLE = 1e-2

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])


_P1 = np.array([1, 2, 0])
_P2 = np.array([2, 0, 1])


def cross(a, b):
    """Row-wise cross product for (..., 3) arrays; cheaper than ``np.cross`` on small inputs."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1 and b.ndim == 1:
        a0, a1, a2 = a.tolist()
        b0, b1, b2 = b.tolist()
        return np.array([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])
    return a.take(_P1, axis=-1) * b.take(_P2, axis=-1) - a.take(_P2, axis=-1) * b.take(_P1, axis=-1)


def hat(v):
    """Cross-product matrix: ``hat(v) @ w == np.cross(v, w)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(M, tol=1e-9):
    M = np.asarray(M, dtype=float)
    if np.linalg.norm(M + M.T) >= tol:
        raise NonSkew(f"matrix is not skew-symmetric (|M + M^T| = {np.linalg.norm(M + M.T):.3e})")
    return np.array([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]]) / 2.0


def skew_part_vee(M):
    """vee of the skew part of an arbitrary 3x3 matrix (no precondition)."""
    return np.array([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]]) / 2.0


def exp_rotation(omega):
    """Rodrigues formula, with a two-term series below ``SMALL_ANGLE``."""
    omega = np.asarray(omega, dtype=float)
    th = np.linalg.norm(omega)
    K = hat(omega)
    if th < SMALL_ANGLE:
        return np.eye(3) + K + 0.5 * (K @ K)
    a = np.sin(th) / th
    b = (1.0 - np.cos(th)) / (th * th)
    return np.eye(3) + a * K + b * (K @ K)


def log_rotation(R):
    """Inverse of :func:`exp_rotation` for rotation angles below pi."""
    c = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    th = np.arccos(c)
    w = skew_part_vee(R)
    if th < 1e-6:
        return w
    return w * th / np.sin(th)


def _dexpinv_coeff(th):
    # (1 - (th/2) cot(th/2)) / th^2
    if th < 1e-4:
        return 1.0 / 12.0 + th * th / 720.0
    return (1.0 - 0.5 * th / np.tan(0.5 * th)) / (th * th)


def dexpinv(phi, w):
    """Inverse of the left-trivialised differential of ``exp`` at ``phi``.

    If ``X(t) = exp(hat(phi(t))) X0`` solves ``X' = hat(w) X`` then
    ``phi' = dexpinv(phi, w)``. For body-frame rates (``R' = R hat(W)``,
    ``R = R0 exp(hat(theta))``) use ``dexpinv(-theta, W)``.
    """
    c = _dexpinv_coeff(np.linalg.norm(phi))
    pw = cross(phi, w)
    return w - 0.5 * pw + c * cross(phi, pw)


def orthonormalize(R):
    """Nearest rotation in Frobenius norm (polar factor via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] *= -1
        Q = U @ Vt
    return Q


def integrate_attitude(R, Omega, dt):
    """Advance ``R' = R hat(Omega)`` with constant body rate over ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return orthonormalize(R @ exp_rotation(np.asarray(Omega, dtype=float) * dt))


def integrate_sphere(q, omega, dt):
    """Advance ``q' = omega x q`` with constant spatial rate over ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = exp_rotation(np.asarray(omega, dtype=float) * dt) @ q
    return out / np.linalg.norm(out)


def rotation_error(R, Rd):
    """Attitude error ``0.5 vee(Rd^T R - R^T Rd)``."""
    E = Rd.T @ R - R.T @ Rd
    return 0.5 * skew_part_vee(E)


def rotation_to_quaternion(R):
    """Unit quaternion (w, x, y, z) with w >= 0."""
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def quaternion_to_rotation(q):
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_rotation(rng):
    q = rng.normal(size=4)
    return quaternion_to_rotation(q)


def random_unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def hat_batch(V):
    V = np.asarray(V, dtype=float)
    out = np.zeros(V.shape[:-1] + (3, 3))
    out[..., 0, 1] = -V[..., 2]
    out[..., 0, 2] = V[..., 1]
    out[..., 1, 0] = V[..., 2]
    out[..., 1, 2] = -V[..., 0]
    out[..., 2, 0] = -V[..., 1]
    out[..., 2, 1] = V[..., 0]
    return out


def exp_rotation_batch(W):
    """Row-wise :func:`exp_rotation` for a (K, 3) array.

    Uses ``hat(w)^2 = w w^T - |w|^2 I`` and fills the nine entries directly.
    """
    W = np.asarray(W, dtype=float)
    x, y, z = W[..., 0], W[..., 1], W[..., 2]
    th2 = x * x + y * y + z * z
    if th2.max() < SERIES_ANGLE ** 2:
        # truncation below theta^6 / 5040, i.e. under 2e-16
        a = 1.0 - th2 / 6.0 * (1.0 - th2 / 20.0)
        b = 0.5 - th2 / 24.0 * (1.0 - th2 / 30.0)
    else:
        th = np.sqrt(th2)
        small = th < SMALL_ANGLE
        ths = np.where(small, 1.0, th)
        a = np.where(small, 1.0, np.sin(ths) / ths)
        b = np.where(small, 0.5, (1.0 - np.cos(ths)) / (ths * ths))
    d = 1.0 - b * th2
    bx, by = b * x, b * y
    bxy, bxz, byz = bx * y, bx * z, by * z
    ax, ay, az = a * x, a * y, a * z
    out = np.empty(W.shape[:-1] + (9,))
    out[..., 0] = d + bx * x
    out[..., 4] = d + by * y
    out[..., 8] = d + b * z * z
    out[..., 1] = bxy - az
    out[..., 3] = bxy + az
    out[..., 2] = bxz + ay
    out[..., 6] = bxz - ay
    out[..., 5] = byz - ax
    out[..., 7] = byz + ax
    return out.reshape(W.shape[:-1] + (3, 3))


def dexpinv_batch(Phi, W):
    Phi = np.asarray(Phi, dtype=float)
    th2 = np.einsum("...i,...i->...", Phi, Phi)
    if th2.max() < SERIES_ANGLE ** 2:
        c = 1.0 / 12.0 + th2 * (1.0 / 720.0 + th2 / 30240.0)
    else:
        th = np.sqrt(th2)
        small = th < 1e-4
        ths = np.where(small, 1.0, th)
        c = np.where(small, 1.0 / 12.0 + th2 / 720.0,
                     (1.0 - 0.5 * ths / np.tan(0.5 * ths)) / (ths * ths))
    pw = cross(Phi, W)
    return W - 0.5 * pw + c[..., None] * cross(Phi, pw)


def reorthonormalize(R):
    """One Bjorck step ``R (3I - R^T R) / 2`` toward the nearest rotation.

    Second-order accurate in the orthogonality defect; meant for matrices that
    are rotations up to accumulated rounding.
    """
    RtR = np.swapaxes(R, -1, -2) @ R
    return 0.5 * R @ (3.0 * np.eye(3) - RtR)


def orthonormalize_batch(Rs):
    U, _, Vt = np.linalg.svd(Rs)
    Q = U @ Vt
    neg = np.linalg.det(Q) < 0
    if np.any(neg):
        U[neg, :, -1] *= -1
        Q = U @ Vt
    return Q
