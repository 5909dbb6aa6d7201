"""Monocular visual-inertial odometry with planar-homography constraints.

Library layout:

- geometry: rotations, rigid transforms, SE(3) trajectory alignment
- imu: preintegration, bias correction, the inertial residual
- homography: construction, DLT fitting, analytical decomposition,
  positive-depth / inertial disambiguation
- ransac: per-plane robust homography fitting
- solver: dogleg trust-region least squares and marginalization
- simulator: synthetic world, trajectory, IMU and feature-track generation
- initializer: homography-seeded SfM and visual-inertial alignment
- estimator: sliding-window back-end with plane factors
- evaluation: trajectory association and ATE
- cli: `planar-vio simulate | run | evaluate`
"""

from .geometry import RigidTransform, Rotation, align_se3, exp_so3, log_so3
from .homography import (
    Homography,
    HomographyDecomposition,
    Plane,
    build_homography,
    decompose_homography,
    filter_positive_depth,
    fit_homography_dlt,
    select_by_imu,
)
from .imu import (
    FrameState,
    ImuBias,
    ImuNoiseParams,
    ImuPreintegration,
    ImuSample,
    correct_for_bias,
    imu_residual,
    preintegrate,
)
from .ransac import RansacConfig, ransac_homography

__all__ = [
    "RigidTransform",
    "Rotation",
    "align_se3",
    "exp_so3",
    "log_so3",
    "Homography",
    "HomographyDecomposition",
    "Plane",
    "build_homography",
    "decompose_homography",
    "filter_positive_depth",
    "fit_homography_dlt",
    "select_by_imu",
    "FrameState",
    "ImuBias",
    "ImuNoiseParams",
    "ImuPreintegration",
    "ImuSample",
    "correct_for_bias",
    "imu_residual",
    "preintegrate",
    "RansacConfig",
    "ransac_homography",
]
