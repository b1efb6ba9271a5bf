"""Matrix Lie group operations for SO(3) and SE2(3).

All functions are pure and operate on plain numpy arrays.  Rotations are
3x3 orthonormal matrices with determinant +1; SE2(3) elements are handled
either as :class:`GroupState` values or as their 5x5 matrix embedding

    [ R   nu  rho ]
    [ 0    1   0  ]
    [ 0    0   1  ]

with tangent vectors ordered ``[phi, dnu, drho]`` (9,).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Below this rotation angle the trigonometric coefficients are replaced by
# their 4th-order Taylor expansions to avoid cancellation.
SMALL_ANGLE = 1e-7

# Angles closer to pi than this use the symmetric-part axis extraction in
# so3_log (the sin(theta) denominator of the standard formula degenerates).
NEAR_PI = 1e-6


def skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix of ``v`` such that ``skew(v) @ w == cross(v, w)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def unskew(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`skew` (antisymmetric part is not enforced)."""
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def _sincos_coeffs(theta: float) -> tuple[float, float]:
    """Return (sin(t)/t, (1-cos(t))/t^2) with series fallback near zero."""
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
        return a, b
    return np.sin(theta) / theta, (1.0 - np.cos(theta)) / (theta * theta)


def so3_exp(phi: np.ndarray) -> np.ndarray:
    """Rodrigues exponential of a rotation vector (rad)."""
    phi = np.asarray(phi, dtype=float)
    theta = float(np.linalg.norm(phi))
    a, b = _sincos_coeffs(theta)
    px = skew(phi)
    return np.eye(3) + a * px + b * (px @ px)


def so3_log(rot: np.ndarray) -> np.ndarray:
    """Rotation vector of an orthonormal ``rot``; result norm is <= pi.

    Near theta = pi the rotation axis is extracted from the symmetric part
    (R + R^T)/2, where the usual antisymmetric-part formula degenerates.
    The axis sign there is fixed so its first nonzero component is positive.
    """
    rot = np.asarray(rot, dtype=float)
    trace = np.clip((np.trace(rot) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(trace))
    if theta < SMALL_ANGLE:
        # log(R) ~ antisymmetric part, second-order accurate near identity
        return unskew(rot - rot.T) / 2.0
    if np.pi - theta < NEAR_PI:
        # arccos is ill-conditioned near pi; recover theta from the
        # antisymmetric part instead (|unskew(R - R^T)/2| = sin(theta)).
        sin_t = min(float(np.linalg.norm(unskew(rot - rot.T) / 2.0)), 1.0)
        theta = np.pi - np.arcsin(sin_t)
        sym = (rot + rot.T) / 2.0
        cos_t = np.cos(theta)
        axis_sq = np.clip((np.diag(sym) - cos_t) / (1.0 - cos_t), 0.0, None)
        axis = np.sqrt(axis_sq)
        # Off-diagonal terms carry the relative signs of the axis components.
        i = int(np.argmax(axis))
        if axis[i] > 0.0:
            for j in range(3):
                if j != i and sym[i, j] / (1.0 - cos_t) < 0.0:
                    axis[j] = -axis[j]
        for c in axis:
            if c != 0.0:
                if c < 0.0:
                    axis = -axis
                break
        return theta * axis / np.linalg.norm(axis)
    return theta / (2.0 * np.sin(theta)) * unskew(rot - rot.T)


def so3_left_jacobian(phi: np.ndarray) -> np.ndarray:
    """Left Jacobian of SO(3): integral of exp along the geodesic."""
    phi = np.asarray(phi, dtype=float)
    theta = float(np.linalg.norm(phi))
    px = skew(phi)
    _, b = _sincos_coeffs(theta)
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    else:
        c = (theta - np.sin(theta)) / theta**3
    return np.eye(3) + b * px + c * (px @ px)


def so3_left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    """Inverse of :func:`so3_left_jacobian`."""
    phi = np.asarray(phi, dtype=float)
    theta = float(np.linalg.norm(phi))
    px = skew(phi)
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    else:
        c = 1.0 / theta**2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) - 0.5 * px + c * (px @ px)


def renormalize(rot: np.ndarray) -> np.ndarray:
    """One symmetric-orthogonalization Newton step, R <- R (3I - R^T R)/2.

    Quadratically convergent for nearly orthonormal input; cheap enough for
    the 200 Hz propagation loop.
    """
    return rot @ ((3.0 * np.eye(3) - rot.T @ rot) / 2.0)


def orthonormalize(rot: np.ndarray) -> np.ndarray:
    """Exact symmetric orthogonalization via SVD (nearest rotation)."""
    u, _, vt = np.linalg.svd(rot)
    r = u @ vt
    if np.linalg.det(r) < 0.0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


@dataclass
class GroupState:
    """SE2(3) element: rotation, group velocity column and position column."""

    rot: np.ndarray
    nu: np.ndarray
    rho: np.ndarray

    def as_matrix(self) -> np.ndarray:
        m = np.eye(5)
        m[:3, :3] = self.rot
        m[:3, 3] = self.nu
        m[:3, 4] = self.rho
        return m

    @staticmethod
    def from_matrix(m: np.ndarray, tol: float = 1e-12) -> "GroupState":
        m = np.asarray(m, dtype=float)
        expected = np.array([[0.0, 0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 0.0, 1.0]])
        if np.max(np.abs(m[3:, :] - expected)) > tol:
            raise ValueError("bottom rows of an SE2(3) matrix must be [0 0 0 1 0], [0 0 0 0 1]")
        return GroupState(m[:3, :3].copy(), m[:3, 3].copy(), m[:3, 4].copy())

    @staticmethod
    def identity() -> "GroupState":
        return GroupState(np.eye(3), np.zeros(3), np.zeros(3))

    def copy(self) -> "GroupState":
        return GroupState(self.rot.copy(), self.nu.copy(), self.rho.copy())


def se23_hat(xi: np.ndarray) -> np.ndarray:
    """Embed a 9-vector [phi, dnu, drho] into the 5x5 Lie algebra."""
    xi = np.asarray(xi, dtype=float)
    m = np.zeros((5, 5))
    m[:3, :3] = skew(xi[:3])
    m[:3, 3] = xi[3:6]
    m[:3, 4] = xi[6:9]
    return m


def se23_vee(m: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Inverse of :func:`se23_hat`; rejects matrices with nonzero bottom rows."""
    m = np.asarray(m, dtype=float)
    if np.max(np.abs(m[3:, :])) > tol:
        raise ValueError("bottom two rows of an se2(3) element must vanish")
    return np.concatenate([unskew(m[:3, :3]), m[:3, 3], m[:3, 4]])


def se23_exp(xi: np.ndarray) -> GroupState:
    """Closed-form exponential; the SO(3) left Jacobian maps both columns."""
    xi = np.asarray(xi, dtype=float)
    phi = xi[:3]
    jac = so3_left_jacobian(phi)
    return GroupState(so3_exp(phi), jac @ xi[3:6], jac @ xi[6:9])


def se23_log(chi: GroupState) -> np.ndarray:
    """Inverse of :func:`se23_exp` for rotation angles below pi."""
    phi = so3_log(chi.rot)
    jinv = so3_left_jacobian_inv(phi)
    return np.concatenate([phi, jinv @ chi.nu, jinv @ chi.rho])


def compose(a: GroupState, b: GroupState) -> GroupState:
    """Group product a * b."""
    return GroupState(a.rot @ b.rot, a.rot @ b.nu + a.nu, a.rot @ b.rho + a.rho)


def inverse(a: GroupState) -> GroupState:
    """Closed-form group inverse (R^T, -R^T nu, -R^T rho)."""
    rt = a.rot.T
    return GroupState(rt.copy(), -(rt @ a.nu), -(rt @ a.rho))


def adjoint(chi: GroupState) -> np.ndarray:
    """9x9 adjoint satisfying hat(Ad_chi xi) = chi hat(xi) chi^-1."""
    ad = np.zeros((9, 9))
    ad[0:3, 0:3] = chi.rot
    ad[3:6, 3:6] = chi.rot
    ad[6:9, 6:9] = chi.rot
    ad[3:6, 0:3] = skew(chi.nu) @ chi.rot
    ad[6:9, 0:3] = skew(chi.rho) @ chi.rot
    return ad


def adjoint_inv(chi: GroupState) -> np.ndarray:
    """Adjoint of the group inverse, computed in closed form."""
    rt = chi.rot.T
    ad = np.zeros((9, 9))
    ad[0:3, 0:3] = rt
    ad[3:6, 3:6] = rt
    ad[6:9, 6:9] = rt
    ad[3:6, 0:3] = -(rt @ skew(chi.nu))
    ad[6:9, 0:3] = -(rt @ skew(chi.rho))
    return ad


def rot_to_quat(rot: np.ndarray) -> np.ndarray:
    """Unit quaternion [w, x, y, z] of a rotation matrix (w >= 0)."""
    t = np.trace(rot)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [
                0.25 * s,
                (rot[2, 1] - rot[1, 2]) / s,
                (rot[0, 2] - rot[2, 0]) / s,
                (rot[1, 0] - rot[0, 1]) / s,
            ]
        )
    else:
        i = int(np.argmax(np.diag(rot)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(rot[i, i] - rot[j, j] - rot[k, k] + 1.0) * 2.0
        q = np.empty(4)
        q[0] = (rot[k, j] - rot[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (rot[j, i] + rot[i, j]) / s
        q[1 + k] = (rot[k, i] + rot[i, k]) / s
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a quaternion [w, x, y, z] (normalized internally)."""
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
