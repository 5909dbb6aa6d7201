import numpy as np
import pytest

from planarvio.geometry import Rotation, exp_so3
from planarvio.homography import (
    Homography,
    Plane,
    build_homography,
    decompose_homography,
    filter_positive_depth,
    fit_homography_dlt,
    select_by_imu,
)


def random_planar_config(rng, t_scale=0.5):
    """Random camera motion viewing a plane in front of the first camera."""
    R = exp_so3(rng.normal(size=3) * 0.25)
    n = rng.normal(size=3)
    n = n / np.linalg.norm(n)
    # bias the normal toward the optical axis so the plane faces the camera
    n = 0.6 * np.array([0.0, 0.0, 1.0]) + 0.4 * n
    n = n / np.linalg.norm(n)
    d = rng.uniform(1.0, 5.0)
    t = rng.normal(size=3) * t_scale
    return R, t, n, d


def sample_plane_points(rng, n, d, count):
    """3D points on the plane, spread in front of the camera."""
    b1 = np.cross(n, [1.0, 0.3, 0.2])
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(n, b1)
    center = d * n
    coeffs = rng.uniform(-0.4 * d, 0.4 * d, size=(count, 2))
    return center + coeffs[:, :1] * b1 + coeffs[:, 1:] * b2


def random_two_view_config(rng, t_scale=0.5, min_ratio=0.01):
    """Physically valid two-view planar config: both cameras on the same
    side of the plane, sampled points in front of both."""
    while True:
        R, t, n, d = random_planar_config(rng, t_scale)
        if np.linalg.norm(t) / d < min_ratio:
            continue
        d_j = d + n @ (R.to_matrix().T @ t)
        if d_j <= 0.05 * d:
            continue
        pts = sample_plane_points(rng, n, d, 30)
        moved = pts @ R.to_matrix().T + t
        if pts[:, 2].min() <= 0.05 or moved[:, 2].min() <= 0.05:
            continue
        return R, t, n, d, pts, moved


class TestBuildHomography:
    def test_identity(self):
        H = build_homography(Rotation.identity(), np.zeros(3), Plane([0, 0, 1], 1.0))
        assert np.abs(H.matrix - np.eye(3)).max() < 1e-12

    def test_axis_translation_forms_diagonal(self):
        R = Rotation.identity()
        m = R.to_matrix() + np.outer([0, 0, -0.5], [0, 0, 1.0]) / 1.0
        assert np.allclose(m, np.diag([1, 1, 0.5]))
        H = build_homography(R, [0, 0, -0.5], Plane([0, 0, 1], 1.0))
        # middle singular value normalized to 1 afterwards
        assert abs(np.linalg.svd(H.matrix, compute_uv=False)[1] - 1.0) < 1e-9

    def test_projective_transfer_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            R, t, n, d = random_planar_config(rng)
            pts = sample_plane_points(rng, n, d, 30)
            xi = pts[:, :2] / pts[:, 2:3]
            moved = pts @ R.to_matrix().T + t
            xj = moved[:, :2] / moved[:, 2:3]
            H = build_homography(R, t, Plane(n, d))
            assert np.abs(H.transfer(xi) - xj).max() < 1e-10

    def test_rejects_nonpositive_distance(self):
        with pytest.raises(ValueError):
            Plane([0, 0, 1], 0.0)


class TestFitHomographyDlt:
    def _correspondences(self, rng, count, noise=0.0):
        R, t, n, d = random_planar_config(rng)
        pts = sample_plane_points(rng, n, d, count)
        xi = pts[:, :2] / pts[:, 2:3]
        moved = pts @ R.to_matrix().T + t
        xj = moved[:, :2] / moved[:, 2:3]
        if noise:
            xi = xi + rng.normal(size=xi.shape) * noise
            xj = xj + rng.normal(size=xj.shape) * noise
        H_true = build_homography(R, t, Plane(n, d))
        return xi, xj, H_true

    def test_exact_four_points(self):
        rng = np.random.default_rng(3)
        xi, xj, H_true = self._correspondences(rng, 4)
        H = fit_homography_dlt((xi, xj))
        assert np.abs(H.matrix - H_true.matrix).max() < 1e-9

    def test_exact_hundred_points(self):
        rng = np.random.default_rng(4)
        xi, xj, H_true = self._correspondences(rng, 100)
        H = fit_homography_dlt((xi, xj))
        assert np.abs(H.matrix - H_true.matrix).max() < 1e-9

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_homography_dlt((np.zeros((3, 2)), np.zeros((3, 2))))

    def test_degenerate_configuration(self):
        # all points on a line
        xi = np.column_stack([np.linspace(0, 1, 8), np.linspace(0, 1, 8)])
        with pytest.raises(ValueError):
            fit_homography_dlt((xi, xi * 1.1))

    def test_noisy_fit_close_to_refined_gold_standard(self):
        rng = np.random.default_rng(5)
        sigma = 0.001
        xi, xj, H_true = self._correspondences(rng, 120, noise=sigma)
        H = fit_homography_dlt((xi, xj))
        err = np.linalg.norm(H.transfer(xi) - xj, axis=1)
        rmse_dlt = np.sqrt((err**2).mean())
        # noise enters both frames; allow 2 sigma of combined transfer error
        assert rmse_dlt <= 2.0 * sigma * np.sqrt(2)
        H_ref = _refine_homography_gauss_newton(H.matrix, xi, xj)
        err_ref = np.linalg.norm(Homography(H_ref).transfer(xi) - xj, axis=1)
        rmse_ref = np.sqrt((err_ref**2).mean())
        assert rmse_dlt <= 1.1 * rmse_ref


def _refine_homography_gauss_newton(H0, xi, xj, iters=15):
    """Nonlinear (gold standard style) refinement oracle for the DLT test."""
    h = H0.ravel() / np.linalg.norm(H0.ravel())
    for _ in range(iters):
        H = h.reshape(3, 3)
        lifted = np.column_stack([xi, np.ones(len(xi))])
        q = lifted @ H.T
        pred = q[:, :2] / q[:, 2:3]
        r = (pred - xj).ravel()
        J = np.zeros((2 * len(xi), 9))
        for k, (p, row) in enumerate(zip(lifted, q)):
            w = row[2]
            J[2 * k, 0:3] = p / w
            J[2 * k, 6:9] = -row[0] * p / w**2
            J[2 * k + 1, 3:6] = p / w
            J[2 * k + 1, 6:9] = -row[1] * p / w**2
        dh = np.linalg.lstsq(J, -r, rcond=None)[0]
        h = h + dh
        h = h / np.linalg.norm(h)
    return h.reshape(3, 3)


class TestDecompose:
    def test_identity_is_pure_rotation(self):
        dec = decompose_homography(Homography(np.eye(3)))
        assert len(dec.candidates) == 1
        assert dec.normal_undetermined
        c = dec.candidates[0]
        assert np.abs(c.rotation.to_matrix() - np.eye(3)).max() < 1e-12
        assert np.allclose(c.t_over_d, 0)

    def test_round_trip_thousand_configs(self):
        rng = np.random.default_rng(6)
        for _ in range(1000):
            R, t, n, d = random_planar_config(rng)
            if np.linalg.norm(t) / d < 0.01:
                continue
            H = build_homography(R, t, Plane(n, d))
            dec = decompose_homography(H)
            assert len(dec.candidates) in (1, 2, 4)
            found = any(
                c.rotation.angle_to(R) < 1e-8
                and np.abs(c.t_over_d - t / d).max() < 1e-8
                and np.abs(c.normal - n).max() < 1e-8
                for c in dec.candidates
            )
            assert found

    def test_candidates_reconstruct_input(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            R, t, n, d = random_planar_config(rng)
            H = build_homography(R, t, Plane(n, d))
            dec = decompose_homography(H)
            for c in dec.candidates:
                recon = c.rotation.to_matrix() + np.outer(c.t_over_d, c.normal)
                s = np.linalg.svd(recon, compute_uv=False)[1]
                assert np.linalg.norm(recon / s - H.matrix, ord="fro") < 1e-8

    def test_sign_symmetry_closure(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            R, t, n, d = random_planar_config(rng)
            if np.linalg.norm(t) / d < 0.05:
                continue
            H = build_homography(R, t, Plane(n, d))
            dec = decompose_homography(H)
            for c in dec.candidates:
                twin = any(
                    np.abs(k.t_over_d + c.t_over_d).max() < 1e-8
                    and np.abs(k.normal + c.normal).max() < 1e-8
                    and k.rotation.angle_to(c.rotation) < 1e-8
                    for k in dec.candidates
                )
                assert twin


class TestFilterPositiveDepth:
    def _four_candidate_case(self, rng):
        while True:
            R, t, n, d, pts, _ = random_two_view_config(rng, min_ratio=0.05)
            H = build_homography(R, t, Plane(n, d))
            dec = decompose_homography(H)
            if len(dec.candidates) == 4:
                xi = pts[:, :2] / pts[:, 2:3]
                return dec, xi.mean(axis=0)

    def test_four_reduce_to_two(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            dec, mean_pt = self._four_candidate_case(rng)
            kept = filter_positive_depth(dec, mean_pt)
            assert len(kept.candidates) == 2

    def test_kept_and_removed(self):
        from planarvio.homography import DecompositionCandidate, HomographyDecomposition

        good = DecompositionCandidate(Rotation.identity(), np.zeros(3), np.array([0, 0, 1.0]))
        bad = DecompositionCandidate(Rotation.identity(), np.zeros(3), np.array([0, 0, -1.0]))
        dec = HomographyDecomposition([good, bad])
        kept = filter_positive_depth(dec, np.array([0.0, 0.0]))
        assert kept.candidates == [good]
        with pytest.raises(ValueError):
            filter_positive_depth(HomographyDecomposition([bad]), np.array([0.0, 0.0]))

    def test_idempotent(self):
        rng = np.random.default_rng(10)
        dec, mean_pt = self._four_candidate_case(rng)
        once = filter_positive_depth(dec, mean_pt)
        twice = filter_positive_depth(once, mean_pt)
        assert once.candidates == twice.candidates


class TestSelectByImu:
    def test_single_candidate_passthrough(self):
        from planarvio.homography import DecompositionCandidate, HomographyDecomposition

        c = DecompositionCandidate(Rotation.identity(), np.zeros(3), np.array([0, 0, 1.0]))
        out = select_by_imu(HomographyDecomposition([c]), exp_so3([0.3, 0, 0]), Rotation.identity())
        assert out is c

    def test_matching_rotation_selected(self):
        from planarvio.homography import DecompositionCandidate, HomographyDecomposition

        Ra = exp_so3([0, 0, 0.4])
        Rb = exp_so3([0.5, -0.2, 0])
        ca = DecompositionCandidate(Ra, np.array([0.1, 0, 0]), np.array([0, 0, 1.0]))
        cb = DecompositionCandidate(Rb, np.array([0.1, 0, 0]), np.array([0, 0, 1.0]))
        # candidate rotations are camera j-from-i; the preintegrated body
        # rotation is i-from-j, so the matching delta is the inverse
        out = select_by_imu(HomographyDecomposition([ca, cb]), Ra.inverse(), Rotation.identity())
        assert out is ca

    def test_tie_raises(self):
        from planarvio.homography import DecompositionCandidate, HomographyDecomposition

        Ra = exp_so3([0, 0, 0.4])
        ca = DecompositionCandidate(Ra, np.array([0.1, 0, 0]), np.array([0, 0, 1.0]))
        cb = DecompositionCandidate(Ra, np.array([-0.1, 0, 0]), np.array([0, 0, -1.0]))
        with pytest.raises(ValueError):
            select_by_imu(HomographyDecomposition([ca, cb]), Ra.inverse(), Rotation.identity())

    def test_monte_carlo_with_gyro_bias(self):
        """Simulated two-frame motion; biased gyro rotation still selects the
        true candidate in >= 999/1000 trials."""
        rng = np.random.default_rng(11)
        R_bc = exp_so3([0.02, -0.6, 0.15])
        wins = 0
        trials = 1000
        for _ in range(trials):
            R, t, n, d, pts, _ = random_two_view_config(rng, t_scale=0.8, min_ratio=0.02)
            H = build_homography(R, t, Plane(n, d))
            dec = decompose_homography(H)
            xi = pts[:, :2] / pts[:, 2:3]
            dec = filter_positive_depth(dec, xi.mean(axis=0))
            # camera rotation i->j is R; body delta (i from j) with bias error
            R_body_ij = (R_bc * R.inverse() * R_bc.inverse())
            dt = 0.5
            bias_err = exp_so3(rng.normal(size=3) * 1e-3 * dt)
            delta_tilde = R_body_ij * bias_err
            try:
                chosen = select_by_imu(dec, delta_tilde, R_bc)
            except ValueError:
                continue
            if chosen.rotation.angle_to(R) < 1e-6:
                wins += 1
        assert wins >= trials - 1


class TestFullRoundTripProperty:
    def test_build_decompose_filter_select(self):
        rng = np.random.default_rng(12)
        R_bc = exp_so3([0.1, 0.2, -0.3])
        for _ in range(300):
            R, t, n, d, pts, _ = random_two_view_config(rng)
            H = build_homography(R, t, Plane(n, d))
            dec = decompose_homography(H)
            xi = pts[:, :2] / pts[:, 2:3]
            dec = filter_positive_depth(dec, xi.mean(axis=0))
            delta = R_bc * R.inverse() * R_bc.inverse()
            chosen = select_by_imu(dec, delta, R_bc)
            assert chosen.rotation.angle_to(R) < 1e-6
            assert np.abs(chosen.t_over_d - t / d).max() < 1e-6
            assert np.abs(chosen.normal - n).max() < 1e-6
