"""IMU measurement model and on-manifold preintegration between keyframes.

Deltas follow the usual convention: gravity is not folded into the deltas,
so a preintegration depends only on the raw samples and the linearization
bias, never on the world-frame state. Midpoint integration (average of
consecutive samples) is used throughout.

Error-state ordering is (dtheta, dv, dp, dbg, dba), 15 dimensions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .geometry import (
    Rotation,
    exp_so3,
    log_so3,
    skew,
    so3_right_jacobian,
    so3_right_jacobian_inv,
)

GRAVITY_MAGNITUDE = 9.81


@dataclass(frozen=True)
class ImuSample:
    timestamp: float
    gyro: np.ndarray
    accel: np.ndarray


@dataclass(frozen=True)
class ImuBias:
    gyro: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def as_vector(self):
        return np.concatenate([self.gyro, self.accel])


@dataclass
class FrameState:
    """Per-keyframe navigation state (world-from-body pose, velocity, bias)."""

    rotation: Rotation
    position: np.ndarray
    velocity: np.ndarray
    bias: ImuBias

    def copy(self):
        return FrameState(
            Rotation(self.rotation.q.copy()),
            self.position.copy(),
            self.velocity.copy(),
            ImuBias(self.bias.gyro.copy(), self.bias.accel.copy()),
        )


@dataclass(frozen=True)
class ImuNoiseParams:
    """Continuous-time noise densities (units per sqrt(Hz))."""

    gyro_noise: float = 1e-4
    accel_noise: float = 1e-3
    gyro_walk: float = 1e-6
    accel_walk: float = 1e-5


@dataclass
class ImuPreintegration:
    delta_r: Rotation
    delta_v: np.ndarray
    delta_p: np.ndarray
    covariance: np.ndarray  # 15x15 over (dtheta, dv, dp, dbg, dba)
    jacobian: np.ndarray  # 15x15 accumulated state-transition product
    bias: ImuBias  # linearization point
    dt: float
    _sqrt_info: np.ndarray | None = None

    @property
    def dr_dbg(self):
        return self.jacobian[0:3, 9:12]

    @property
    def dv_dbg(self):
        return self.jacobian[3:6, 9:12]

    @property
    def dv_dba(self):
        return self.jacobian[3:6, 12:15]

    @property
    def dp_dbg(self):
        return self.jacobian[6:9, 9:12]

    @property
    def dp_dba(self):
        return self.jacobian[6:9, 12:15]

    @property
    def sqrt_info(self):
        if self._sqrt_info is None:
            try:
                L = np.linalg.cholesky(self.covariance + 1e-18 * np.eye(15))
            except np.linalg.LinAlgError as exc:
                raise ValueError("preintegration covariance is not invertible") from exc
            self._sqrt_info = scipy.linalg.solve_triangular(
                L, np.eye(15), lower=True
            )
        return self._sqrt_info


def preintegrate(samples, bias: ImuBias, noise: ImuNoiseParams) -> ImuPreintegration:
    """Summarize an IMU sample sequence into relative-motion deltas.

    Requires >= 2 samples with strictly increasing timestamps. Covariance is
    propagated per step; bias Jacobians accumulate as the product of the
    per-step transition matrices.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError("preintegration needs at least 2 samples")
    times = np.array([s.timestamp for s in samples])
    if np.any(np.diff(times) <= 0):
        raise ValueError("timestamps must be strictly increasing")

    Rk = np.eye(3)
    qk = Rotation.identity()
    dv = np.zeros(3)
    dp = np.zeros(3)
    P = np.zeros((15, 15))
    J = np.eye(15)

    sg2 = noise.gyro_noise**2
    sa2 = noise.accel_noise**2
    sbg2 = noise.gyro_walk**2
    sba2 = noise.accel_walk**2

    for k in range(len(samples) - 1):
        s0, s1 = samples[k], samples[k + 1]
        dt = s1.timestamp - s0.timestamp
        w_mid = 0.5 * (s0.gyro + s1.gyro) - bias.gyro
        a0 = s0.accel - bias.accel
        a1 = s1.accel - bias.accel

        phi = w_mid * dt
        D = exp_so3(phi).to_matrix()
        Jr = so3_right_jacobian(phi)
        Rk1 = Rk @ D
        a_mid = 0.5 * (Rk @ a0 + Rk1 @ a1)

        # error-state transition over (dtheta, dv, dp, dbg, dba)
        A0 = Rk @ skew(a0)
        A1 = Rk1 @ skew(a1)
        F = np.eye(15)
        F[0:3, 0:3] = D.T
        F[0:3, 9:12] = -Jr * dt
        F_vth = -0.5 * (A0 + A1 @ D.T) * dt
        F[3:6, 0:3] = F_vth
        F[3:6, 9:12] = 0.5 * A1 @ Jr * dt * dt
        F[3:6, 12:15] = -0.5 * (Rk + Rk1) * dt
        F[6:9, 0:3] = 0.5 * F_vth * dt
        F[6:9, 3:6] = np.eye(3) * dt
        F[6:9, 9:12] = 0.5 * F[3:6, 9:12] * dt
        F[6:9, 12:15] = 0.5 * F[3:6, 12:15] * dt

        # noise input: (ng0, na0, ng1, na1, nbg, nba)
        G = np.zeros((15, 18))
        G[0:3, 0:3] = 0.5 * Jr * dt
        G[0:3, 6:9] = 0.5 * Jr * dt
        G[3:6, 0:3] = -0.25 * A1 @ Jr * dt * dt
        G[3:6, 6:9] = G[3:6, 0:3]
        G[3:6, 3:6] = 0.5 * Rk * dt
        G[3:6, 9:12] = 0.5 * Rk1 * dt
        G[6:9, :12] = 0.5 * G[3:6, :12] * dt
        G[9:12, 12:15] = np.eye(3)
        G[12:15, 15:18] = np.eye(3)

        q = np.concatenate(
            [
                np.full(3, sg2 / dt),
                np.full(3, sa2 / dt),
                np.full(3, sg2 / dt),
                np.full(3, sa2 / dt),
                np.full(3, sbg2 * dt),
                np.full(3, sba2 * dt),
            ]
        )
        P = F @ P @ F.T + (G * q) @ G.T
        J = F @ J

        dp = dp + dv * dt + 0.5 * a_mid * dt * dt
        dv = dv + a_mid * dt
        qk = qk * exp_so3(phi)
        Rk = qk.to_matrix()

    P = 0.5 * (P + P.T)
    return ImuPreintegration(
        delta_r=qk,
        delta_v=dv,
        delta_p=dp,
        covariance=P,
        jacobian=J,
        bias=bias,
        dt=float(times[-1] - times[0]),
    )


BIAS_CORRECTION_WARN = 0.05


def correct_for_bias(pre: ImuPreintegration, new_bias: ImuBias):
    """First-order delta update for a bias change, without re-integration.

    Returns (delta_r, delta_v, delta_p) at the new bias. Deviations above
    BIAS_CORRECTION_WARN per axis are outside the trusted linear range.
    """
    dbg = new_bias.gyro - pre.bias.gyro
    dba = new_bias.accel - pre.bias.accel
    if np.any(np.abs(np.concatenate([dbg, dba])) > BIAS_CORRECTION_WARN):
        warnings.warn("bias correction outside first-order trust region")
    dphi = pre.dr_dbg @ dbg
    dr = pre.delta_r if not dphi.any() else pre.delta_r * exp_so3(dphi)
    dv = pre.delta_v + pre.dv_dbg @ dbg + pre.dv_dba @ dba
    dp = pre.delta_p + pre.dp_dbg @ dbg + pre.dp_dba @ dba
    return dr, dv, dp


def compose_preintegrations(
    a: ImuPreintegration, b: ImuPreintegration
) -> ImuPreintegration:
    """Chain two consecutive preintegrations sharing the same bias."""
    Ra = a.delta_r.to_matrix()
    dr = a.delta_r * b.delta_r
    dv = a.delta_v + Ra @ b.delta_v
    dp = a.delta_p + a.delta_v * b.dt + Ra @ b.delta_p

    Rb = b.delta_r.to_matrix()
    F = np.eye(15)
    F[0:3, 0:3] = Rb.T
    F[3:6, 0:3] = -Ra @ skew(b.delta_v)
    F[6:9, 0:3] = -Ra @ skew(b.delta_p)
    F[6:9, 3:6] = np.eye(3) * b.dt

    J = F @ a.jacobian
    J[0:3, 9:12] = Rb.T @ a.dr_dbg + b.dr_dbg
    J[3:6, 9:12] = a.dv_dbg - Ra @ skew(b.delta_v) @ a.dr_dbg + Ra @ b.dv_dbg
    J[3:6, 12:15] = a.dv_dba + Ra @ b.dv_dba
    J[6:9, 9:12] = (
        a.dp_dbg + a.dv_dbg * b.dt - Ra @ skew(b.delta_p) @ a.dr_dbg + Ra @ b.dp_dbg
    )
    J[6:9, 12:15] = a.dp_dba + a.dv_dba * b.dt + Ra @ b.dp_dba

    M = np.eye(15)
    M[3:6, 3:6] = Ra
    M[6:9, 6:9] = Ra
    P = F @ a.covariance @ F.T + M @ b.covariance @ M.T
    return ImuPreintegration(dr, dv, dp, P, J, a.bias, a.dt + b.dt)


def propagate_state(state: FrameState, pre: ImuPreintegration, gravity) -> FrameState:
    """Forward-propagate a world-frame state through a preintegration."""
    R = state.rotation.to_matrix()
    g = np.asarray(gravity, dtype=float)
    dt = pre.dt
    return FrameState(
        rotation=state.rotation * pre.delta_r,
        position=state.position + state.velocity * dt + 0.5 * g * dt * dt + R @ pre.delta_p,
        velocity=state.velocity + g * dt + R @ pre.delta_v,
        bias=state.bias,
    )


def imu_residual(
    state_i: FrameState,
    state_j: FrameState,
    pre: ImuPreintegration,
    gravity,
    with_jacobians=False,
    whiten=True,
):
    """Whitened 15-vector preintegration residual between two frame states.

    Zero when the states are consistent with the integrated motion.
    Optionally returns Jacobians w.r.t. the tangents of
    (pose_i[dt,dtheta], speedbias_i[v,bg,ba], pose_j, speedbias_j).
    Whitening is a fixed linear map (the covariance inverse square root);
    it can be disabled for numerical Jacobian checks.
    """
    Ri = state_i.rotation.to_matrix()
    g = np.asarray(gravity, dtype=float)
    dt = pre.dt

    dbg = state_i.bias.gyro - pre.bias.gyro
    dba = state_i.bias.accel - pre.bias.accel
    phi_corr = pre.dr_dbg @ dbg
    gamma = pre.delta_r * exp_so3(phi_corr)
    dv_hat = pre.delta_v + pre.dv_dbg @ dbg + pre.dv_dba @ dba
    dp_hat = pre.delta_p + pre.dp_dbg @ dbg + pre.dp_dba @ dba

    E = gamma.inverse() * state_i.rotation.inverse() * state_j.rotation
    r_rot = log_so3(E)
    v_term = Ri.T @ (state_j.velocity - state_i.velocity - g * dt)
    p_term = Ri.T @ (
        state_j.position - state_i.position - state_i.velocity * dt - 0.5 * g * dt * dt
    )
    r = np.concatenate(
        [
            r_rot,
            v_term - dv_hat,
            p_term - dp_hat,
            state_j.bias.gyro - state_i.bias.gyro,
            state_j.bias.accel - state_i.bias.accel,
        ]
    )

    sqrt_info = pre.sqrt_info if whiten else np.eye(15)
    rw = sqrt_info @ r
    if not with_jacobians:
        return rw

    Rj = state_j.rotation.to_matrix()
    jr_inv = so3_right_jacobian_inv(r_rot)
    Et = E.to_matrix().T
    Jcorr = so3_right_jacobian(phi_corr) @ pre.dr_dbg

    J_pose_i = np.zeros((15, 6))
    J_sb_i = np.zeros((15, 9))
    J_pose_j = np.zeros((15, 6))
    J_sb_j = np.zeros((15, 9))

    J_pose_i[0:3, 3:6] = -jr_inv @ (Rj.T @ Ri)
    J_sb_i[0:3, 3:6] = -jr_inv @ Et @ Jcorr
    J_pose_j[0:3, 3:6] = jr_inv

    J_pose_i[3:6, 3:6] = skew(v_term)
    J_sb_i[3:6, 0:3] = -Ri.T
    J_sb_i[3:6, 3:6] = -pre.dv_dbg
    J_sb_i[3:6, 6:9] = -pre.dv_dba
    J_sb_j[3:6, 0:3] = Ri.T

    J_pose_i[6:9, 0:3] = -Ri.T
    J_pose_i[6:9, 3:6] = skew(p_term)
    J_sb_i[6:9, 0:3] = -Ri.T * dt
    J_sb_i[6:9, 3:6] = -pre.dp_dbg
    J_sb_i[6:9, 6:9] = -pre.dp_dba
    J_pose_j[6:9, 0:3] = Ri.T

    J_sb_i[9:12, 3:6] = -np.eye(3)
    J_sb_j[9:12, 3:6] = np.eye(3)
    J_sb_i[12:15, 6:9] = -np.eye(3)
    J_sb_j[12:15, 6:9] = np.eye(3)

    return rw, (
        sqrt_info @ J_pose_i,
        sqrt_info @ J_sb_i,
        sqrt_info @ J_pose_j,
        sqrt_info @ J_sb_j,
    )
