"""Rotation / rigid-transform algebra used throughout the library.

Rotations are stored as unit quaternions (w, x, y, z) and renormalized after
every composition. Perturbations are applied on the right (body frame):
R_new = R * exp(delta).
"""

from __future__ import annotations

import numpy as np

_SMALL_ANGLE = 1e-8


def skew(v):
    """3x3 cross-product matrix [v]x."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def quat_multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


class Rotation:
    """Unit quaternion (w, x, y, z)."""

    __slots__ = ("q",)

    def __init__(self, q):
        q = np.asarray(q, dtype=float)
        n = np.linalg.norm(q)
        if n == 0.0 or not np.isfinite(n):
            raise ValueError("quaternion has zero or non-finite norm")
        q = q / n
        if q[0] < 0.0:
            q = -q
        self.q = q

    @staticmethod
    def identity():
        return Rotation(np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def from_matrix(m):
        m = np.asarray(m, dtype=float)
        t = np.trace(m)
        if t > 0.0:
            s = np.sqrt(t + 1.0) * 2.0
            w = 0.25 * s
            x = (m[2, 1] - m[1, 2]) / s
            y = (m[0, 2] - m[2, 0]) / s
            z = (m[1, 0] - m[0, 1]) / s
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            w = (m[2, 1] - m[1, 2]) / s
            x = 0.25 * s
            y = (m[0, 1] + m[1, 0]) / s
            z = (m[0, 2] + m[2, 0]) / s
        elif m[1, 1] > m[2, 2]:
            s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            w = (m[0, 2] - m[2, 0]) / s
            x = (m[0, 1] + m[1, 0]) / s
            y = 0.25 * s
            z = (m[1, 2] + m[2, 1]) / s
        else:
            s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            w = (m[1, 0] - m[0, 1]) / s
            x = (m[0, 2] + m[2, 0]) / s
            y = (m[1, 2] + m[2, 1]) / s
            z = 0.25 * s
        return Rotation(np.array([w, x, y, z]))

    def to_matrix(self):
        w, x, y, z = self.q
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def compose(self, other: "Rotation") -> "Rotation":
        return Rotation(quat_multiply(self.q, other.q))

    def __mul__(self, other):
        if isinstance(other, Rotation):
            return self.compose(other)
        return NotImplemented

    def inverse(self) -> "Rotation":
        w, x, y, z = self.q
        return Rotation(np.array([w, -x, -y, -z]))

    def apply(self, v):
        """Rotate a 3-vector (or Nx3 array of vectors)."""
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            return self.to_matrix() @ v
        return v @ self.to_matrix().T

    def angle_to(self, other: "Rotation") -> float:
        return float(np.linalg.norm(log_so3(self.inverse() * other)))

    def __repr__(self):
        return f"Rotation(q={self.q})"


class RigidTransform:
    """Rigid transform (R, t): p_out = R p_in + t."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation: Rotation, translation):
        self.rotation = rotation
        self.translation = np.asarray(translation, dtype=float)

    @staticmethod
    def identity():
        return RigidTransform(Rotation.identity(), np.zeros(3))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(
            self.rotation * other.rotation,
            self.rotation.apply(other.translation) + self.translation,
        )

    def __mul__(self, other):
        if isinstance(other, RigidTransform):
            return self.compose(other)
        return NotImplemented

    def inverse(self) -> "RigidTransform":
        rinv = self.rotation.inverse()
        return RigidTransform(rinv, -rinv.apply(self.translation))

    def apply(self, p):
        return self.rotation.apply(p) + self.translation

    def __repr__(self):
        return f"RigidTransform(R={self.rotation.q}, t={self.translation})"


def exp_so3(omega) -> Rotation:
    """Rodrigues exponential of a rotation vector (radians)."""
    omega = np.asarray(omega, dtype=float)
    angle = np.linalg.norm(omega)
    if angle < _SMALL_ANGLE:
        # second-order series for the quaternion
        half = 0.5 * omega
        w = 1.0 - 0.125 * angle * angle
        return Rotation(np.concatenate(([w], half)))
    axis = omega / angle
    half = 0.5 * angle
    return Rotation(np.concatenate(([np.cos(half)], np.sin(half) * axis)))


def log_so3(r: Rotation):
    """Rotation vector of a rotation; inverse of exp_so3 for angles < pi.

    Near pi the axis is recovered from the quaternion vector part; the
    result is still returned but increasingly ill-conditioned.
    """
    w, x, y, z = r.q
    vec = np.array([x, y, z])
    n = np.linalg.norm(vec)
    if n < _SMALL_ANGLE:
        return 2.0 * vec / max(w, _SMALL_ANGLE)
    angle = 2.0 * np.arctan2(n, w)
    return vec * (angle / n)


def rot_matrix_exp(omega):
    return exp_so3(omega).to_matrix()


def so3_right_jacobian(phi):
    """Jr(phi): Exp(phi + d) ~= Exp(phi) Exp(Jr(phi) d)."""
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    K = skew(phi)
    if angle < 1e-6:
        return np.eye(3) - 0.5 * K + (K @ K) / 6.0
    a2 = angle * angle
    return (
        np.eye(3)
        - (1.0 - np.cos(angle)) / a2 * K
        + (angle - np.sin(angle)) / (a2 * angle) * (K @ K)
    )


def so3_right_jacobian_inv(phi):
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    K = skew(phi)
    if angle < 1e-6:
        return np.eye(3) + 0.5 * K + (K @ K) / 12.0
    a2 = angle * angle
    coeff = 1.0 / a2 - (1.0 + np.cos(angle)) / (2.0 * angle * np.sin(angle))
    return np.eye(3) + 0.5 * K + coeff * (K @ K)


def unit_vector_basis(n):
    """Orthonormal (b1, b2) spanning the tangent plane of the unit vector n."""
    n = np.asarray(n, dtype=float)
    pivot = np.argmin(np.abs(n))
    e = np.zeros(3)
    e[pivot] = 1.0
    b1 = np.cross(n, e)
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(n, b1)
    return b1, b2


def align_se3(estimate, reference) -> RigidTransform:
    """Closed-form SE(3) alignment of two equal-length position sequences.

    Returns T minimizing sum ||T(p_est) - p_ref||^2 (Umeyama without scale;
    rotation from the SVD of the centered cross-covariance with a
    determinant guard, translation from the centroids).
    """
    est = np.asarray(estimate, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if est.shape != ref.shape:
        raise ValueError("sequences must have the same length")
    if est.shape[0] < 3:
        raise ValueError("need at least 3 poses to align")
    mu_e = est.mean(axis=0)
    mu_r = ref.mean(axis=0)
    cov = (ref - mu_r).T @ (est - mu_e)
    U, _, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    t = mu_r - R @ mu_e
    return RigidTransform(Rotation.from_matrix(R), t)
