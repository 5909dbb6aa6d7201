"""Trajectory evaluation: timestamp association and SE(3)-aligned ATE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import align_se3

ASSOCIATION_TOLERANCE = 0.010  # seconds


@dataclass
class AteResult:
    rmse: float
    median: float
    max: float
    per_axis_rmse: np.ndarray
    matched: int

    def __str__(self):
        return (
            f"ATE RMSE {self.rmse:.6g} m (median {self.median:.6g}, "
            f"max {self.max:.6g}) over {self.matched} poses; "
            f"per-axis {self.per_axis_rmse[0]:.4g} {self.per_axis_rmse[1]:.4g} "
            f"{self.per_axis_rmse[2]:.4g}"
        )


def associate(est_times, ref_times, tolerance=ASSOCIATION_TOLERANCE):
    """Nearest-neighbor timestamp pairs within tolerance; each reference
    index used at most once."""
    pairs = []
    used = set()
    ref_times = np.asarray(ref_times)
    for i, t in enumerate(np.asarray(est_times)):
        j = int(np.argmin(np.abs(ref_times - t)))
        if abs(ref_times[j] - t) <= tolerance and j not in used:
            pairs.append((i, j))
            used.add(j)
    return pairs


def ate_rmse(estimate, reference, tolerance=ASSOCIATION_TOLERANCE) -> AteResult:
    """SE(3)-aligned absolute trajectory error.

    estimate, reference: (N, >=4) arrays with rows (t, x, y, z, ...).
    """
    estimate = np.asarray(estimate, float)
    reference = np.asarray(reference, float)
    pairs = associate(estimate[:, 0], reference[:, 0], tolerance)
    if len(pairs) < 3:
        raise ValueError("fewer than 3 timestamp-matched poses")
    ei = np.array([p[0] for p in pairs])
    ri = np.array([p[1] for p in pairs])
    est_p = estimate[ei, 1:4]
    ref_p = reference[ri, 1:4]
    T = align_se3(est_p, ref_p)
    aligned = est_p @ T.rotation.to_matrix().T + T.translation
    err = aligned - ref_p
    norms = np.linalg.norm(err, axis=1)
    return AteResult(
        rmse=float(np.sqrt((norms**2).mean())),
        median=float(np.median(norms)),
        max=float(norms.max()),
        per_axis_rmse=np.sqrt((err**2).mean(axis=0)),
        matched=len(pairs),
    )
