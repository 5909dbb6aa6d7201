"""Per-plane robust homography fitting.

Discards feature tracks that violate the plane's homography between a frame
pair: optical-flow mismatches, dynamic features leaked past segmentation
masks, and features mis-assigned to a plane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .homography import Homography, fit_homography_dlt


@dataclass(frozen=True)
class RansacConfig:
    threshold: float = 0.005  # symmetric transfer error, normalized coords
    confidence: float = 0.99
    max_iterations: int = 200
    min_inliers: int = 8

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


def _symmetric_transfer_error(H: np.ndarray, pi: np.ndarray, pj: np.ndarray):
    """Max of forward and backward transfer distances per correspondence."""
    Hinv = np.linalg.inv(H)
    li = np.column_stack([pi, np.ones(len(pi))])
    lj = np.column_stack([pj, np.ones(len(pj))])
    fwd = li @ H.T
    bwd = lj @ Hinv.T
    with np.errstate(divide="ignore", invalid="ignore"):
        fwd2 = fwd[:, :2] / fwd[:, 2:3]
        bwd2 = bwd[:, :2] / bwd[:, 2:3]
    e_fwd = np.linalg.norm(fwd2 - pj, axis=1)
    e_bwd = np.linalg.norm(bwd2 - pi, axis=1)
    err = np.maximum(e_fwd, e_bwd)
    bad = (fwd[:, 2] * li[:, 2] <= 0) | (bwd[:, 2] * lj[:, 2] <= 0)
    err[bad | ~np.isfinite(err)] = np.inf
    return err


def _dlt4(pi, pj):
    """Minimal-sample DLT without normalization; None when degenerate."""
    x, y = pi[:, 0], pi[:, 1]
    u, v = pj[:, 0], pj[:, 1]
    zeros = np.zeros(4)
    ones = np.ones(4)
    A = np.empty((8, 9))
    A[0::2] = np.column_stack([x, y, ones, zeros, zeros, zeros, -u * x, -u * y, -u])
    A[1::2] = np.column_stack([zeros, zeros, zeros, x, y, ones, -v * x, -v * y, -v])
    _, sv, Vt = np.linalg.svd(A)
    if sv[7] < 1e-12 * max(sv[0], 1.0):
        return None
    return Vt[-1].reshape(3, 3)


def ransac_homography(correspondences, cfg: RansacConfig, rng_seed: int):
    """Robustly fit a homography; returns (Homography, inlier mask).

    Deterministic for a fixed seed. The iteration budget adapts from the
    running inlier ratio (standard log(1-c)/log(1-w^4) rule, capped at
    cfg.max_iterations). The final model is refit by DLT on all inliers.

    Raises ValueError when fewer than 4 correspondences are given or the
    final inlier count is below cfg.min_inliers.
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
        raise ValueError("RANSAC needs at least 4 correspondences")

    rng = np.random.default_rng(rng_seed)
    best_count = -1
    best_mask = None
    max_needed = cfg.max_iterations
    it = 0
    while it < min(cfg.max_iterations, max_needed):
        it += 1
        idx = rng.choice(n, size=4, replace=False)
        Hm = _dlt4(pi[idx], pj[idx])
        if Hm is None:
            continue
        err = _symmetric_transfer_error(Hm, pi, pj)
        mask = err <= cfg.threshold
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            w = count / n
            if w > 0:
                denom = np.log(max(1.0 - w**4, 1e-300))
                max_needed = int(np.ceil(np.log(1.0 - cfg.confidence) / denom))

    if best_mask is None or best_count < max(cfg.min_inliers, 4):
        raise ValueError("plane rejected: not enough RANSAC inliers")

    # refit on all inliers, then re-derive the mask from the refined model
    for _ in range(2):
        H = fit_homography_dlt((pi[best_mask], pj[best_mask]))
        err = _symmetric_transfer_error(H.matrix, pi, pj)
        new_mask = err <= cfg.threshold
        if new_mask.sum() < 4 or np.array_equal(new_mask, best_mask):
            best_mask = new_mask if new_mask.sum() >= 4 else best_mask
            break
        best_mask = new_mask

    if int(best_mask.sum()) < cfg.min_inliers:
        raise ValueError("plane rejected: not enough RANSAC inliers")
    H = fit_homography_dlt((pi[best_mask], pj[best_mask]))
    err = _symmetric_transfer_error(H.matrix, pi, pj)
    final_mask = err <= cfg.threshold
    if int(final_mask.sum()) < cfg.min_inliers:
        raise ValueError("plane rejected: not enough RANSAC inliers")
    return H, final_mask
