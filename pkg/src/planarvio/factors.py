"""Residual blocks of the sliding-window problem.

Window parameter blocks: ("pose", k) 7-vec (t, q) world-from-body,
("sb", k) 9-vec (v, bg, ba), ("lam", k) inverse depths of features anchored
at keyframe k, ("plane", p) 4-vec (n, d) in the world frame.

Reprojection and plane-homography factors are evaluated in vectorized
batches (one residual block per type) with per-factor Cauchy reweighting
applied inside the block; the reported cost is the true robust cost.
"""

from __future__ import annotations

import numpy as np

from .geometry import Rotation, skew, unit_vector_basis
from .homography import Plane
from .imu import FrameState, ImuBias, imu_residual
from .solver import CauchyLoss, ResidualBlock


def quat_to_matrix_batch(q):
    """(K,4) quaternions (w,x,y,z) -> (K,3,3) rotation matrices."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    K = len(q)
    m = np.empty((K, 3, 3))
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - w * z)
    m[:, 0, 2] = 2 * (x * z + w * y)
    m[:, 1, 0] = 2 * (x * y + w * z)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - w * x)
    m[:, 2, 0] = 2 * (x * z - w * y)
    m[:, 2, 1] = 2 * (y * z + w * x)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def skew_batch(v):
    K = len(v)
    m = np.zeros((K, 3, 3))
    m[:, 0, 1] = -v[:, 2]
    m[:, 0, 2] = v[:, 1]
    m[:, 1, 0] = v[:, 2]
    m[:, 1, 2] = -v[:, 0]
    m[:, 2, 0] = -v[:, 1]
    m[:, 2, 1] = v[:, 0]
    return m


def state_from_blocks(pose, sb):
    return FrameState(
        rotation=Rotation(pose[3:7]),
        position=pose[:3].copy(),
        velocity=sb[:3].copy(),
        bias=ImuBias(sb[3:6].copy(), sb[6:9].copy()),
    )


class ImuFactor(ResidualBlock):
    """Preintegrated inertial constraint between consecutive keyframes."""

    dim = 15
    loss = None

    def __init__(self, key_pose_i, key_sb_i, key_pose_j, key_sb_j, pre, gravity):
        self.params = (key_pose_i, key_sb_i, key_pose_j, key_sb_j)
        self.pre = pre
        self.gravity = gravity

    def evaluate(self, pose_i, sb_i, pose_j, sb_j):
        si = state_from_blocks(pose_i, sb_i)
        sj = state_from_blocks(pose_j, sb_j)
        r, jacs = imu_residual(si, sj, self.pre, self.gravity, with_jacobians=True)
        return r, list(jacs)


class GaugePrior(ResidualBlock):
    """Soft anchor on one pose: pins position and yaw-free rotation.

    Used only as a test utility; the estimator fixes the first pose block
    outright until a marginalization prior exists.
    """

    dim = 6

    def __init__(self, key_pose, pose0, sigma_pos=1e-4, sigma_rot=1e-4):
        self.params = (key_pose,)
        self.pose0 = pose0.copy()
        self.w_pos = 1.0 / sigma_pos
        self.w_rot = 1.0 / sigma_rot
        self.loss = None

    def evaluate(self, pose):
        from .geometry import log_so3

        dt = (pose[:3] - self.pose0[:3]) * self.w_pos
        dq = log_so3(Rotation(self.pose0[3:]).inverse() * Rotation(pose[3:])) * self.w_rot
        J = np.zeros((6, 6))
        J[:3, :3] = np.eye(3) * self.w_pos
        J[3:, 3:] = np.eye(3) * self.w_rot  # first order in the small pin
        return np.concatenate([dt, dq]), [J]


def _dehom_jacobian_batch(u):
    """(N,3) homogeneous -> (N,2,3) d(dehom)/du."""
    N = len(u)
    D = np.zeros((N, 2, 3))
    z = u[:, 2]
    D[:, 0, 0] = 1.0 / z
    D[:, 1, 1] = 1.0 / z
    D[:, 0, 2] = -u[:, 0] / z**2
    D[:, 1, 2] = -u[:, 1] / z**2
    return D


class ReprojectionBatch(ResidualBlock):
    """All anchor->target inverse-depth reprojection factors of a window.

    factors: list of (anchor_kf, target_kf, lam_block_key, lam_index,
    x_anchor(2,), x_target(2,)). Residual rows: (pred - obs)/sigma.
    Factors whose transferred depth is non-positive contribute zero rows
    for the iteration.
    """

    def __init__(self, pose_keys, lam_keys, factors, t_bc, sigma, loss=None):
        self.pose_keys = list(pose_keys)
        self.lam_keys = list(lam_keys)
        self.params = tuple(self.pose_keys + self.lam_keys)
        self.factors = factors
        self.dim = 2 * len(factors)
        self.loss = loss
        self.sigma = sigma
        self.R_bc = t_bc.rotation.to_matrix()
        self.p_bc = t_bc.translation
        self._pose_index = {k: i for i, k in enumerate(self.pose_keys)}
        self._lam_index = {k: i for i, k in enumerate(self.lam_keys)}
        self.ai = np.array([self._pose_index[f[0]] for f in factors], int)
        self.ji = np.array([self._pose_index[f[1]] for f in factors], int)
        self.li = np.array([self._lam_index[f[2]] for f in factors], int)
        self.lofs = np.array([f[3] for f in factors], int)
        self.xa = np.array([f[4] for f in factors], float).reshape(-1, 2)
        self.xj = np.array([f[5] for f in factors], float).reshape(-1, 2)

    @property
    def n_factors(self):
        return len(self.factors)

    def _core(self, values):
        poses = np.array([values[i] for i in range(len(self.pose_keys))])
        lam_blocks = [values[len(self.pose_keys) + i] for i in range(len(self.lam_keys))]
        N = self.n_factors
        lam = np.array([lam_blocks[self.li[f]][self.lofs[f]] for f in range(N)])

        Rw = quat_to_matrix_batch(poses[:, 3:7])
        tw = poses[:, :3]
        Ra = Rw[self.ai]
        ta = tw[self.ai]
        Rj = Rw[self.ji]
        tj = tw[self.ji]

        lift_a = np.column_stack([self.xa, np.ones(N)])
        invalid = lam <= 1e-6
        lam_safe = np.where(invalid, 1.0, lam)
        P_ca = lift_a / lam_safe[:, None]
        P_ba = P_ca @ self.R_bc.T + self.p_bc
        P_w = np.einsum("nij,nj->ni", Ra, P_ba) + ta
        P_bj = np.einsum("nji,nj->ni", Rj, P_w - tj)
        P_cj = (P_bj - self.p_bc) @ self.R_bc
        invalid |= P_cj[:, 2] <= 1e-3
        z = np.where(invalid, 1.0, P_cj[:, 2])
        P_cj = P_cj.copy()
        P_cj[:, 2] = z
        pred = P_cj[:, :2] / z[:, None]
        res = (pred - self.xj) / self.sigma
        res[invalid] = 0.0
        return poses, lam, Ra, ta, Rj, tj, P_ca, P_ba, P_bj, P_cj, res, invalid, lam_safe

    def evaluate(self, *values):
        (poses, lam, Ra, ta, Rj, tj, P_ca, P_ba, P_bj, P_cj, res, invalid, lam_safe) = self._core(values)
        N = self.n_factors
        D = _dehom_jacobian_batch(P_cj) / self.sigma  # (N,2,3)
        Rbc = self.R_bc

        # dP_cj/d(param) chains
        RbcT_RjT = np.einsum("ab,ncb->nac", Rbc.T, Rj)  # Rbc^T Rj^T
        A_ta = RbcT_RjT
        A_tha = -np.einsum("nab,nbc->nac", np.einsum("nab,nbc->nac", RbcT_RjT, Ra), skew_batch(P_ba))
        A_tj = -RbcT_RjT
        A_thj = np.einsum("ab,nbc->nac", Rbc.T, skew_batch(P_bj))
        dP_dlam = np.einsum(
            "nab,nb->na",
            np.einsum("nab,bc->nac", np.einsum("nab,nbc->nac", RbcT_RjT, Ra), Rbc),
            -P_ca / lam_safe[:, None],
        )

        J_ta = np.einsum("nab,nbc->nac", D, A_ta)
        J_tha = np.einsum("nab,nbc->nac", D, A_tha)
        J_tj = np.einsum("nab,nbc->nac", D, A_tj)
        J_thj = np.einsum("nab,nbc->nac", D, A_thj)
        J_lam = np.einsum("nab,nb->na", D, dP_dlam)

        for arr in (J_ta, J_tha, J_tj, J_thj):
            arr[invalid] = 0.0
        J_lam[invalid] = 0.0

        jacs = []
        nrows = self.dim
        for k, key in enumerate(self.pose_keys):
            Jp = np.zeros((nrows, 6))
            sel_a = self.ai == k
            sel_j = self.ji == k
            if sel_a.any():
                rows = np.flatnonzero(sel_a)
                Jp[2 * rows[:, None] + np.array([0, 1]), :3] += J_ta[rows]
                Jp[2 * rows[:, None] + np.array([0, 1]), 3:] += J_tha[rows]
            if sel_j.any():
                rows = np.flatnonzero(sel_j)
                Jp[2 * rows[:, None] + np.array([0, 1]), :3] += J_tj[rows]
                Jp[2 * rows[:, None] + np.array([0, 1]), 3:] += J_thj[rows]
            jacs.append(Jp)
        for k, key in enumerate(self.lam_keys):
            dim_l = len(values[len(self.pose_keys) + k])
            Jl = np.zeros((nrows, dim_l))
            sel = self.li == k
            rows = np.flatnonzero(sel)
            if len(rows):
                Jl[2 * rows, self.lofs[rows]] = J_lam[rows, 0]
                Jl[2 * rows + 1, self.lofs[rows]] = J_lam[rows, 1]
            jacs.append(Jl)
        return res.reshape(-1), jacs

    def contribute(self, *values):
        res, jacs = self.evaluate(*values)
        if self.loss is None:
            return res, jacs, 0.5 * float(res @ res)
        r2 = res.reshape(-1, 2)
        sq = (r2 * r2).sum(axis=1)
        w = self.loss.weight(sq)
        cost = 0.5 * float(np.sum(self.loss.cost(sq)))
        wr = np.repeat(w, 2)
        return res * wr, [j * wr[:, None] for j in jacs], cost


class HomographyBatch(ResidualBlock):
    """All anchor->target plane-homography transfer factors of a window.

    factors: list of (anchor_kf, target_kf, plane_key, x_anchor, x_target).
    Residual rows: (obs_target - transfer(x_anchor))/sigma. Factors whose
    plane falls behind either camera or whose transfer has non-positive
    homogeneous depth contribute zero rows.
    """

    def __init__(self, pose_keys, plane_keys, factors, t_bc, sigma, loss=None):
        self.pose_keys = list(pose_keys)
        self.plane_keys = list(plane_keys)
        self.params = tuple(self.pose_keys + self.plane_keys)
        self.factors = factors
        self.dim = 2 * len(factors)
        self.loss = loss
        self.sigma = sigma
        self.R_bc = t_bc.rotation.to_matrix()
        self.p_bc = t_bc.translation
        self._pose_index = {k: i for i, k in enumerate(self.pose_keys)}
        self._plane_index = {k: i for i, k in enumerate(self.plane_keys)}
        self.ai = np.array([self._pose_index[f[0]] for f in factors], int)
        self.ji = np.array([self._pose_index[f[1]] for f in factors], int)
        self.pi = np.array([self._plane_index[f[2]] for f in factors], int)
        self.xa = np.array([f[3] for f in factors], float).reshape(-1, 2)
        self.xj = np.array([f[4] for f in factors], float).reshape(-1, 2)

    @property
    def n_factors(self):
        return len(self.factors)

    def evaluate(self, *values):
        npose = len(self.pose_keys)
        poses = np.array([values[i] for i in range(npose)])
        planes = np.array([values[npose + i] for i in range(len(self.plane_keys))])
        N = self.n_factors
        Rbc = self.R_bc

        Rw = quat_to_matrix_batch(poses[:, 3:7])
        tw = poses[:, :3]
        Ra, ta = Rw[self.ai], tw[self.ai]
        Rj, tj = Rw[self.ji], tw[self.ji]
        n_w = planes[self.pi, :3]
        d_w = planes[self.pi, 3]

        lift_a = np.column_stack([self.xa, np.ones(N)])
        ray_b = lift_a @ Rbc.T  # R_bc x in body
        y = np.einsum("nij,nj->ni", Ra, ray_b)  # world ray
        t_ca = ta + np.einsum("nij,j->ni", Ra, self.p_bc)
        t_cj = tj + np.einsum("nij,j->ni", Rj, self.p_bc)
        d_ca = d_w - np.einsum("ni,ni->n", n_w, t_ca)
        invalid = d_ca <= 1e-6
        d_safe = np.where(invalid, 1.0, d_ca)
        alpha = np.einsum("ni,ni->n", n_w, y) / d_safe
        dt = t_ca - t_cj
        v = y + dt * alpha[:, None]
        # u = Rbc^T Rj^T v
        Rjv = np.einsum("nji,nj->ni", Rj, v)
        u = Rjv @ Rbc
        invalid |= u[:, 2] <= 1e-6
        z = np.where(invalid, 1.0, u[:, 2])
        u = u.copy()
        u[:, 2] = z
        pred = u[:, :2] / z[:, None]
        res = (self.xj - pred) / self.sigma
        res[invalid] = 0.0

        D = -_dehom_jacobian_batch(u) / self.sigma  # residual = (obs - pred)/sigma

        RbcT_RjT = np.einsum("ab,ncb->nac", Rbc.T, Rj)

        # pose j
        A_thj = np.einsum("ab,nbc->nac", Rbc.T, skew_batch(Rjv)) + alpha[:, None, None] * np.einsum(
            "nab,nbc->nac", RbcT_RjT, np.einsum("nab,bc->nac", Rj, skew(self.p_bc))
        )
        A_tj = -alpha[:, None, None] * RbcT_RjT

        # pose a
        Yp = -np.einsum("nab,nbc->nac", Ra, skew_batch(ray_b))
        Tp = -np.einsum("nab,bc->nac", Ra, skew(self.p_bc))
        nY = np.einsum("ni,nij->nj", n_w, Yp)
        nT = np.einsum("ni,nij->nj", n_w, Tp)
        dalpha_tha = nY / d_safe[:, None] + alpha[:, None] * nT / d_safe[:, None]
        dv_tha = Yp + alpha[:, None, None] * Tp + np.einsum("ni,nj->nij", dt, dalpha_tha)
        A_tha = np.einsum("nab,nbc->nac", RbcT_RjT, dv_tha)
        dalpha_ta = n_w / d_safe[:, None] * alpha[:, None]  # from d(1/d_ca)
        A_ta = np.einsum("nab,nbc->nac", RbcT_RjT, alpha[:, None, None] * np.eye(3)[None] + np.einsum("ni,nj->nij", dt, dalpha_ta))

        # plane tangent (b1, b2 at n_w, log d)
        b1 = np.empty((N, 3))
        b2 = np.empty((N, 3))
        for p_idx in range(len(self.plane_keys)):
            sel = self.pi == p_idx
            if sel.any():
                bb1, bb2 = unit_vector_basis(planes[p_idx, :3])
                b1[sel] = bb1
                b2[sel] = bb2
        dn1 = np.cross(b1, n_w)
        dn2 = np.cross(b2, n_w)
        dalpha_n1 = (np.einsum("ni,ni->n", dn1, y) + alpha * np.einsum("ni,ni->n", dn1, t_ca)) / d_safe
        dalpha_n2 = (np.einsum("ni,ni->n", dn2, y) + alpha * np.einsum("ni,ni->n", dn2, t_ca)) / d_safe
        dalpha_logd = -alpha * d_w / d_safe
        A_plane = np.stack(
            [
                np.einsum("nab,nb->na", RbcT_RjT, dt * dalpha_n1[:, None]),
                np.einsum("nab,nb->na", RbcT_RjT, dt * dalpha_n2[:, None]),
                np.einsum("nab,nb->na", RbcT_RjT, dt * dalpha_logd[:, None]),
            ],
            axis=2,
        )  # (N,3,3): du/d(plane tangent)

        J_ta = np.einsum("nab,nbc->nac", D, A_ta)
        J_tha = np.einsum("nab,nbc->nac", D, A_tha)
        J_tj = np.einsum("nab,nbc->nac", D, A_tj)
        J_thj = np.einsum("nab,nbc->nac", D, A_thj)
        J_plane = np.einsum("nab,nbc->nac", D, A_plane)
        for arr in (J_ta, J_tha, J_tj, J_thj, J_plane):
            arr[invalid] = 0.0

        jacs = []
        nrows = self.dim
        for k in range(npose):
            Jp = np.zeros((nrows, 6))
            rows = np.flatnonzero(self.ai == k)
            if len(rows):
                Jp[2 * rows[:, None] + np.array([0, 1]), :3] += J_ta[rows]
                Jp[2 * rows[:, None] + np.array([0, 1]), 3:] += J_tha[rows]
            rows = np.flatnonzero(self.ji == k)
            if len(rows):
                Jp[2 * rows[:, None] + np.array([0, 1]), :3] += J_tj[rows]
                Jp[2 * rows[:, None] + np.array([0, 1]), 3:] += J_thj[rows]
            jacs.append(Jp)
        for k in range(len(self.plane_keys)):
            Jpl = np.zeros((nrows, 3))
            rows = np.flatnonzero(self.pi == k)
            if len(rows):
                Jpl[2 * rows[:, None] + np.array([0, 1]), :] = J_plane[rows]
            jacs.append(Jpl)
        return res.reshape(-1), jacs

    def contribute(self, *values):
        res, jacs = self.evaluate(*values)
        if self.loss is None:
            return res, jacs, 0.5 * float(res @ res)
        r2 = res.reshape(-1, 2)
        sq = (r2 * r2).sum(axis=1)
        w = self.loss.weight(sq)
        cost = 0.5 * float(np.sum(self.loss.cost(sq)))
        wr = np.repeat(w, 2)
        return res * wr, [j * wr[:, None] for j in jacs], cost


# ---------------------------------------------------------------------------
# single-factor wrappers (contract surface + tests)


def transform_plane_to_body(plane: Plane, state_i: FrameState, t_bc, reference_pose=None):
    """Plane (n, d) given in the reference camera frame C0, expressed in the
    body frame at state_i:

        n_B0 = R_BC n_C0
        d_B0 = d_C0 + t_BC . n_B0
        n_Bi = R_i^T n_B0,  d_Bi = d_B0 - t_i . n_B0

    where the world frame coincides with B0 (reference_pose overrides the
    identity when the plane's anchor body frame is elsewhere). Raises when
    the transformed plane passes behind the body origin.
    """
    if plane.distance <= 0:
        raise ValueError("plane distance must be positive")
    R_bc = t_bc.rotation.to_matrix()
    if plane.frame == "world":
        n_w = plane.normal
        d_w = plane.distance
    else:
        n_b0 = R_bc @ plane.normal
        d_b0 = plane.distance + t_bc.translation @ n_b0
        if reference_pose is None:
            n_w, d_w = n_b0, d_b0
        else:
            n_w = reference_pose.rotation.apply(n_b0)
            d_w = d_b0 + n_w @ reference_pose.translation
    Ri = state_i.rotation.to_matrix()
    n_bi = Ri.T @ n_w
    d_bi = d_w - state_i.position @ n_w
    if d_bi <= 0:
        raise ValueError("plane behind the body origin")
    return n_bi, d_bi


def plane_to_world(plane: Plane, t_bc, reference_pose=None):
    """(n, d) of a C0-frame plane in the world frame (B0 == world unless a
    reference pose is given)."""
    if plane.frame == "world":
        return plane.normal.copy(), plane.distance
    R_bc = t_bc.rotation.to_matrix()
    n_b0 = R_bc @ plane.normal
    d_b0 = plane.distance + t_bc.translation @ n_b0
    if reference_pose is None:
        return n_b0, d_b0
    n_w = reference_pose.rotation.apply(n_b0)
    return n_w, d_b0 + n_w @ reference_pose.translation


def homography_residual(
    state_i: FrameState,
    state_j: FrameState,
    plane: Plane,
    x_i,
    x_j,
    t_bc,
    sigma=1.0,
    with_jacobians=False,
):
    """Planar transfer residual of one feature between two keyframes.

    Maps the anchor observation through the plane-induced homography
    (body-frame relative motion conjugated by the extrinsics) and subtracts
    it from the target observation; whitened by sigma. Returns the
    2-vector, optionally with Jacobians w.r.t. (pose_i, pose_j,
    plane tangent [n x2, log d]).
    """
    n_w, d_w = plane_to_world(plane, t_bc)
    factors = [(0, 1, "p", np.asarray(x_i, float), np.asarray(x_j, float))]
    batch = HomographyBatch([0, 1], ["p"], factors, t_bc, sigma, loss=None)
    pose_i = np.concatenate([state_i.position, state_i.rotation.q])
    pose_j = np.concatenate([state_j.position, state_j.rotation.q])
    plane_vec = np.concatenate([n_w, [d_w]])
    res, jacs = batch.evaluate(pose_i, pose_j, plane_vec)
    if with_jacobians:
        return res, jacs
    return res


def reprojection_residual(
    state_i: FrameState,
    state_j: FrameState,
    inv_depth: float,
    x_i,
    x_j,
    t_bc,
    sigma=1.0,
    with_jacobians=False,
):
    """Inverse-depth reprojection residual of one feature (anchor i ->
    target j), whitened by sigma. Optionally returns Jacobians w.r.t.
    (pose_i, pose_j, inverse depth)."""
    factors = [(0, 1, "l", 0, np.asarray(x_i, float), np.asarray(x_j, float))]
    batch = ReprojectionBatch([0, 1], ["l"], factors, t_bc, sigma, loss=None)
    pose_i = np.concatenate([state_i.position, state_i.rotation.q])
    pose_j = np.concatenate([state_j.position, state_j.rotation.q])
    res, jacs = batch.evaluate(pose_i, pose_j, np.array([inv_depth], float))
    if with_jacobians:
        return res, jacs
    return res
