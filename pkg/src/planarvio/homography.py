"""Planar homography construction, fitting, decomposition, disambiguation.

All image coordinates are normalized (calibrated) coordinates. A homography
between frames i and j maps lifted points (x, y, 1) of plane features from
frame i to rays of frame j:

    H = R + t n^T / d

where (R, t) moves points from frame i to frame j and (n, d) is the plane
in frame i with n^T p = d, d > 0. Homographies are scale-normalized so the
middle singular value equals 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Rotation

PURE_ROTATION_TOL = 1e-6


@dataclass
class Plane:
    """Plane n^T p = d with unit normal and positive distance."""

    normal: np.ndarray
    distance: float
    plane_id: int = -1
    frame: str = "C0"

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=float)
        n = np.linalg.norm(self.normal)
        if n == 0:
            raise ValueError("plane normal must be nonzero")
        self.normal = self.normal / n
        if self.distance <= 0:
            raise ValueError("plane distance must be positive")


class Homography:
    """Scale-normalized 3x3 homography matrix."""

    __slots__ = ("matrix",)

    def __init__(self, matrix, normalize=True):
        m = np.asarray(matrix, dtype=float)
        if normalize:
            s = np.linalg.svd(m, compute_uv=False)[1]
            if s <= 0:
                raise ValueError("homography is rank deficient")
            m = m / s
            # canonical sign: det(R + t n^T / d) = d_j / d_i > 0 whenever both
            # cameras are on the same side of the plane
            if np.linalg.det(m) < 0:
                m = -m
        self.matrix = m

    def transfer(self, points):
        """Map normalized 2D points (N,2) through the homography."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lifted = np.column_stack([pts, np.ones(len(pts))])
        mapped = lifted @ self.matrix.T
        return mapped[:, :2] / mapped[:, 2:3]

    def __repr__(self):
        return f"Homography({self.matrix})"


@dataclass
class DecompositionCandidate:
    rotation: Rotation
    t_over_d: np.ndarray
    normal: np.ndarray


@dataclass
class HomographyDecomposition:
    candidates: list
    normal_undetermined: bool = False


def build_homography(rotation: Rotation, translation, plane: Plane) -> Homography:
    """H = R + t n^T / d, scale-normalized."""
    if plane.distance <= 0:
        raise ValueError("plane distance must be positive")
    t = np.asarray(translation, dtype=float)
    m = rotation.to_matrix() + np.outer(t, plane.normal) / plane.distance
    return Homography(m)


def _hartley_normalization(pts):
    centroid = pts.mean(axis=0)
    d = np.linalg.norm(pts - centroid, axis=1).mean()
    s = np.sqrt(2.0) / max(d, 1e-12)
    T = np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )
    return (pts - centroid) * s, T


def fit_homography_dlt(correspondences) -> Homography:
    """Direct linear transform with Hartley normalization.

    `correspondences` is a sequence of (x_i, x_j) normalized-coordinate
    pairs, or a pair of (N,2) arrays. Minimizes the algebraic error.
    """
    if isinstance(correspondences, tuple) and len(correspondences) == 2:
        pi, pj = correspondences
    else:
        arr = np.asarray(correspondences, dtype=float)
        pi, pj = arr[:, 0], arr[:, 1]
    pi = np.atleast_2d(np.asarray(pi, dtype=float))
    pj = np.atleast_2d(np.asarray(pj, dtype=float))
    n = len(pi)
    if n < 4:
        raise ValueError("homography fit needs at least 4 correspondences")

    ni, Ti = _hartley_normalization(pi)
    nj, Tj = _hartley_normalization(pj)

    x, y = ni[:, 0], ni[:, 1]
    u, v = nj[:, 0], nj[:, 1]
    zeros = np.zeros(n)
    ones = np.ones(n)
    rows_a = np.column_stack([x, y, ones, zeros, zeros, zeros, -u * x, -u * y, -u])
    rows_b = np.column_stack([zeros, zeros, zeros, x, y, ones, -v * x, -v * y, -v])
    A = np.empty((2 * n, 9))
    A[0::2] = rows_a
    A[1::2] = rows_b

    _, sv, Vt = np.linalg.svd(A)
    if sv[7] < 1e-10 * max(sv[0], 1.0):
        raise ValueError("degenerate point configuration for homography fit")
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.inv(Tj) @ Hn @ Ti
    return Homography(H)


def decompose_homography(H: Homography) -> HomographyDecomposition:
    """Analytical candidate motions (R, t/d, n) of a normalized homography.

    Uses the singular-value construction on H^T H: with singular values
    s1 >= s2 = 1 >= s3 the generic case yields four candidates closed under
    the sign symmetry (R, t, n) -> (R, -t, -n). A (near) pure rotation
    yields a single candidate with the normal flagged undetermined.
    """
    M = H.matrix
    # eigen decomposition of H^T H; eigenvalues are squared singular values
    w, V = np.linalg.eigh(M.T @ M)
    order = np.argsort(w)[::-1]
    w = w[order]
    V = V[:, order]
    if np.linalg.det(V) < 0:
        V = -V
    s1, s2, s3 = np.sqrt(np.maximum(w, 0.0))

    if s1 - s3 < PURE_ROTATION_TOL:
        # pure rotation: project H onto SO(3)
        U, _, Vt = np.linalg.svd(M)
        R = U @ Vt
        if np.linalg.det(R) < 0:
            R = U @ np.diag([1.0, 1.0, -1.0]) @ Vt
        cand = DecompositionCandidate(
            Rotation.from_matrix(R), np.zeros(3), np.array([0.0, 0.0, 1.0])
        )
        return HomographyDecomposition([cand], normal_undetermined=True)

    v1, v2, v3 = V[:, 0], V[:, 1], V[:, 2]
    denom = np.sqrt(max(s1 * s1 - s3 * s3, 1e-300))
    a = np.sqrt(max(1.0 - s3 * s3, 0.0))
    b = np.sqrt(max(s1 * s1 - 1.0, 0.0))
    u1 = (a * v1 + b * v3) / denom
    u2 = (a * v1 - b * v3) / denom

    candidates = []
    for u in (u1, u2):
        U1 = np.column_stack([v2, u, np.cross(v2, u)])
        Hv2 = M @ v2
        Hu = M @ u
        W1 = np.column_stack([Hv2, Hu, np.cross(Hv2, Hu)])
        R = W1 @ U1.T
        n = np.cross(v2, u)
        t = (M - R) @ n
        for sign in (1.0, -1.0):
            candidates.append(
                DecompositionCandidate(
                    Rotation.from_matrix(R), sign * t, sign * n
                )
            )

    # deduplicate coincident candidates (degenerate t parallel to n case)
    kept = []
    for c in candidates:
        dup = False
        for k in kept:
            if (
                np.allclose(c.normal, k.normal, atol=1e-9)
                and np.allclose(c.t_over_d, k.t_over_d, atol=1e-9)
                and np.allclose(c.rotation.q, k.rotation.q, atol=1e-9)
            ):
                dup = True
                break
        if not dup:
            kept.append(c)

    # verify every candidate reconstructs the input
    verified = []
    for c in kept:
        recon = c.rotation.to_matrix() + np.outer(c.t_over_d, c.normal)
        s = np.linalg.svd(recon, compute_uv=False)[1]
        if np.linalg.norm(recon / s - M, ord="fro") < 1e-6:
            verified.append(c)
    if not verified:
        raise ValueError("homography decomposition failed reconstruction check")
    return HomographyDecomposition(verified)


def filter_positive_depth(
    dec: HomographyDecomposition, mean_point
) -> HomographyDecomposition:
    """Keep candidates whose plane lies in front of the camera.

    `mean_point` is the mean of the inlier normalized coordinates in the
    source frame; the test is n . (x, y, 1) > 0.
    """
    if dec.normal_undetermined:
        return dec
    m = np.asarray(mean_point, dtype=float)
    lifted = np.array([m[0], m[1], 1.0]) if m.shape == (2,) else m
    kept = [c for c in dec.candidates if float(c.normal @ lifted) > 0.0]
    if not kept:
        raise ValueError("all decomposition candidates fail the positive-depth test")
    return HomographyDecomposition(kept)


def select_by_imu(
    dec: HomographyDecomposition,
    delta_r: Rotation,
    extrinsic_rotation: Rotation,
) -> DecompositionCandidate:
    """Pick the candidate whose rotation best matches the preintegrated one.

    `delta_r` is the preintegrated body rotation taking frame-j vectors to
    frame-i vectors for the same (i -> j) pair the homography was fit on.
    The candidate rotations map i -> j in the camera frame, so each is
    inverted, conjugated into the body frame by the body-from-camera
    extrinsic rotation, and scored by || dR^T (R_bc R_k R_bc^T) - I ||_F^2.
    """
    if not dec.candidates:
        raise ValueError("empty decomposition")
    if len(dec.candidates) == 1:
        return dec.candidates[0]
    Rbc = extrinsic_rotation.to_matrix()
    Dt = delta_r.to_matrix().T
    scores = []
    for c in dec.candidates:
        R_ij_cam = c.rotation.to_matrix().T  # camera-frame i-from-j
        err = Dt @ (Rbc @ R_ij_cam @ Rbc.T) - np.eye(3)
        scores.append(float(np.sum(err * err)))
    scores = np.asarray(scores)
    best = int(np.argmin(scores))
    others = np.delete(scores, best)
    if others.size and np.min(others) - scores[best] < 1e-9:
        raise ValueError("ambiguous candidate selection; pick different base frames")
    return dec.candidates[best]
