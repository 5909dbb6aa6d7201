import numpy as np
import pytest

from planarvio.geometry import exp_so3
from planarvio.solver import (
    CauchyLoss,
    EuclideanManifold,
    FunctionResidual,
    PlaneManifold,
    PoseManifold,
    Problem,
    RotationManifold,
    SolveOptions,
    evaluate_jacobians_fd,
    marginalize,
    solve,
)


def test_scalar_quadratic():
    p = Problem()
    p.add_parameter_block("x", [0.0])
    p.add_residual_block(
        FunctionResidual(("x",), 1, lambda x: (x - 3.0, [np.eye(1)]))
    )
    report = solve(p)
    assert abs(p.value("x")[0] - 3.0) < 1e-10
    assert report.iterations <= 2


def test_rosenbrock_two_blocks():
    p = Problem()
    p.add_parameter_block("x", [-1.2])
    p.add_parameter_block("y", [1.0])

    def resid(x, y):
        r = np.array([10.0 * (y[0] - x[0] ** 2), 1.0 - x[0]])
        Jx = np.array([[-20.0 * x[0]], [-1.0]])
        Jy = np.array([[10.0], [0.0]])
        return r, [Jx, Jy]

    p.add_residual_block(FunctionResidual(("x", "y"), 2, resid))
    solve(p, SolveOptions(max_iterations=200))
    assert abs(p.value("x")[0] - 1.0) < 1e-8
    assert abs(p.value("y")[0] - 1.0) < 1e-8


def _make_ba_problem(rng, noise=0.01):
    """Tiny bundle adjustment: 3 poses, 10 points, pixel-noise observations."""
    poses_true = []
    for k in range(3):
        t = np.array([k * 0.5, 0.1 * k, 0.0])
        q = exp_so3([0.02 * k, -0.03 * k, 0.05 * k]).q
        poses_true.append(np.concatenate([t, q]))
    pts_true = rng.uniform([-1, -1, 4], [1, 1, 6], size=(10, 3))

    def project(pose, pt):
        from planarvio.geometry import Rotation

        R = Rotation(pose[3:]).to_matrix()
        pc = R.T @ (pt - pose[:3])
        return pc[:2] / pc[2]

    obs = {
        (k, j): project(poses_true[k], pts_true[j]) + rng.normal(size=2) * noise
        for k in range(3)
        for j in range(10)
    }
    return poses_true, pts_true, obs, project


def _ba_residual_factory(obs_kj):
    from planarvio.geometry import Rotation, skew

    def resid(pose, pt):
        R = Rotation(pose[3:]).to_matrix()
        pc = R.T @ (pt - pose[:3])
        pred = pc[:2] / pc[2]
        r = pred - obs_kj
        Dp = np.array([[1 / pc[2], 0, -pc[0] / pc[2] ** 2], [0, 1 / pc[2], -pc[1] / pc[2] ** 2]])
        d_pc_dt = -R.T
        d_pc_dth = skew(pc)
        Jpose = np.hstack([Dp @ d_pc_dt, Dp @ d_pc_dth])
        Jpt = Dp @ R.T
        return r, [Jpose, Jpt]

    return resid


def test_small_ba_matches_gradient_descent_oracle():
    rng = np.random.default_rng(0)
    poses_true, pts_true, obs, project = _make_ba_problem(rng)

    def build(initial_poses, initial_pts):
        p = Problem()
        for k in range(3):
            p.add_parameter_block(("pose", k), initial_poses[k], PoseManifold())
        for j in range(10):
            p.add_parameter_block(("pt", j), initial_pts[j])
        p.set_fixed(("pose", 0))
        for (k, j), z in obs.items():
            p.add_residual_block(
                FunctionResidual((("pose", k), ("pt", j)), 2, _ba_residual_factory(z))
            )
        return p

    init_poses = [x.copy() for x in poses_true]
    init_poses[1][:3] += rng.normal(size=3) * 0.05
    init_poses[2][:3] += rng.normal(size=3) * 0.05
    init_pts = pts_true + rng.normal(size=pts_true.shape) * 0.05

    p = build(init_poses, init_pts)
    report = solve(p, SolveOptions(max_iterations=100))

    # long-run first-order oracle: gradient descent on the same objective
    p2 = build(init_poses, init_pts)
    offsets, ncols = p2.free_layout()
    for _ in range(4000):
        J, r, _ = p2.build_system()
        g = J.T @ r
        p2.apply_step(offsets, -0.05 * g)
    gd_cost = p2.total_cost()
    assert report.final_cost <= gd_cost + 1e-8


def test_cost_nonincreasing_across_accepted_steps():
    rng = np.random.default_rng(1)
    poses_true, pts_true, obs, _ = _make_ba_problem(rng, noise=0.02)
    p = Problem()
    for k in range(3):
        start = poses_true[k].copy()
        start[:3] += rng.normal(size=3) * 0.1
        p.add_parameter_block(("pose", k), start, PoseManifold())
    for j in range(10):
        p.add_parameter_block(("pt", j), pts_true[j] + rng.normal(size=3) * 0.1)
    p.set_fixed(("pose", 0))
    for (k, j), z in obs.items():
        p.add_residual_block(
            FunctionResidual((("pose", k), ("pt", j)), 2, _ba_residual_factory(z))
        )
    report = solve(p, SolveOptions(max_iterations=50))
    assert all(b <= a + 1e-12 for a, b in zip(report.costs, report.costs[1:]))


def test_non_finite_initial_point_raises():
    p = Problem()
    p.add_parameter_block("x", [np.nan])
    p.add_residual_block(FunctionResidual(("x",), 1, lambda x: (x, [np.eye(1)])))
    with pytest.raises(ValueError):
        solve(p)


def test_cauchy_near_quadratic_for_small_residuals():
    loss = CauchyLoss(scale=1.0)
    r = 0.01 * 1.0  # ||r|| = 0.01 * scale
    w = loss.weight(r * r)
    assert abs(w - 1.0) < 1e-3


def test_cauchy_downweights_outliers():
    p = Problem()
    p.add_parameter_block("x", [0.0])
    # 5 consistent measurements at 1.0, one gross outlier at 50
    for z in [1.0, 1.0, 1.0, 1.0, 1.0, 50.0]:
        p.add_residual_block(
            FunctionResidual(
                ("x",), 1, (lambda zz: (lambda x: (x - zz, [np.eye(1)])))(z),
                loss=CauchyLoss(scale=1.0),
            )
        )
    solve(p, SolveOptions(max_iterations=100))
    assert abs(p.value("x")[0] - 1.0) < 0.05


# ---------------------------------------------------------------------------
# marginalization


def random_linear_graph(rng, n_blocks):
    """Random linear-Gaussian factor graph over scalar/vector blocks.

    Returns (problem, keys, exact joint information H, b) built from unary
    and binary factors r = A x (+ B y) - z.
    """
    dims = rng.integers(1, 4, size=n_blocks)
    p = Problem()
    keys = [("b", i) for i in range(n_blocks)]
    x_lin = {}
    for k, dim in zip(keys, dims):
        val = rng.normal(size=dim)
        x_lin[k] = val
        p.add_parameter_block(k, val)

    offsets = {}
    col = 0
    for k, dim in zip(keys, dims):
        offsets[k] = col
        col += dim
    H = np.zeros((col, col))
    b = np.zeros(col)

    def add_factor(ks):
        sizes = [dims[keys.index(k)] for k in ks]
        rdim = int(rng.integers(1, 4))
        As = [rng.normal(size=(rdim, s)) for s in sizes]
        z = rng.normal(size=rdim)

        def fn(*values, As=As, z=z):
            r = sum(A @ v for A, v in zip(As, values)) - z
            return r, list(As)

        p.add_residual_block(FunctionResidual(tuple(ks), rdim, fn))
        r0 = sum(A @ x_lin[k] for A, k in zip(As, ks)) - z
        Jrow = np.zeros((rdim, col))
        for A, k in zip(As, ks):
            Jrow[:, offsets[k] : offsets[k] + A.shape[1]] = A
        nonlocal H, b
        H += Jrow.T @ Jrow
        b += Jrow.T @ r0

    for i in range(n_blocks):
        add_factor([keys[i]])  # unary keeps things well conditioned
    for i in range(n_blocks - 1):
        add_factor([keys[i], keys[i + 1]])
    for _ in range(n_blocks):
        i, j = rng.choice(n_blocks, size=2, replace=False)
        add_factor([keys[i], keys[j]])
    return p, keys, dims, offsets, H, b, x_lin


def test_marginalize_matches_closed_form_gaussian():
    rng = np.random.default_rng(3)
    for _ in range(40):
        n = int(rng.integers(3, 8))
        p, keys, dims, offsets, H, b, x_lin = random_linear_graph(rng, n)
        drop = [keys[0]]
        prior = marginalize(p, drop)

        nd = dims[0]
        Hdd = H[:nd, :nd]
        Hdk = H[:nd, nd:]
        Hkk = H[nd:, nd:]
        Hs = Hkk - Hdk.T @ np.linalg.inv(Hdd) @ Hdk
        gs = b[nd:] - Hdk.T @ np.linalg.inv(Hdd) @ b[:nd]

        # re-assemble the prior's implied information in the H layout
        po, pcols = prior.tangent_offsets()
        perm = np.zeros((pcols, H.shape[0] - nd))
        for k in prior.keys:
            src = po[k]
            dst = offsets[k] - nd
            td = prior.manifolds[k].tangent_dim
            perm[src : src + td, dst : dst + td] = np.eye(td)
        Jp = prior.jacobian @ perm
        Hp = Jp.T @ Jp
        gp = Jp.T @ prior.residual
        assert np.abs(Hp - Hs).max() < 1e-9
        assert np.abs(gp - gs).max() < 1e-9


def test_marginalize_then_solve_equals_full_solve_linear():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = int(rng.integers(3, 7))
        p, keys, dims, offsets, H, b, x_lin = random_linear_graph(rng, n)
        p_full = Problem()
        p_full.blocks = {k: type(v)(v.value.copy(), v.manifold, v.fixed) for k, v in p.blocks.items()}
        p_full.residuals = list(p.residuals)
        solve(p_full, SolveOptions(max_iterations=50))

        prior = marginalize(p, [keys[0]])
        p_marg = Problem()
        for k in keys[1:]:
            p_marg.add_parameter_block(k, x_lin[k])
        p_marg.add_residual_block(prior.as_residual_block())
        solve(p_marg, SolveOptions(max_iterations=50))
        for k in keys[1:]:
            assert np.abs(p_marg.value(k) - p_full.value(k)).max() < 1e-9


def test_marginalize_untouched_block_empty_prior():
    p = Problem()
    p.add_parameter_block("a", np.zeros(2))
    prior = marginalize(p, ["a"])
    assert prior.is_empty


def test_gaussian_marginal_mean_and_covariance():
    """Prior distribution equals the exact Gaussian marginal on a chain."""
    rng = np.random.default_rng(7)
    p, keys, dims, offsets, H, b, x_lin = random_linear_graph(rng, 3)
    prior = marginalize(p, [keys[0]])
    nd = dims[0]
    Hs = H[nd:, nd:] - H[:nd, nd:].T @ np.linalg.inv(H[:nd, :nd]) @ H[:nd, nd:]
    gs = b[nd:] - H[:nd, nd:].T @ np.linalg.inv(H[:nd, :nd]) @ b[:nd]
    mean_exact = -np.linalg.solve(Hs, gs)  # tangent mean around x_lin
    cov_exact = np.linalg.inv(Hs)

    po, pcols = prior.tangent_offsets()
    perm = np.zeros((pcols, Hs.shape[0]))
    for k in prior.keys:
        td = prior.manifolds[k].tangent_dim
        perm[po[k] : po[k] + td, offsets[k] - nd : offsets[k] - nd + td] = np.eye(td)
    Jp = prior.jacobian @ perm
    Hp = Jp.T @ Jp
    gp = Jp.T @ prior.residual
    assert np.abs(np.linalg.solve(Hp, -gp) - mean_exact).max() < 1e-9
    assert np.abs(np.linalg.inv(Hp) - cov_exact).max() < 1e-8


# ---------------------------------------------------------------------------
# manifolds and FD utility


def test_manifold_plus_minus_round_trip():
    rng = np.random.default_rng(9)
    manifolds = [
        EuclideanManifold(4),
        RotationManifold(),
        PoseManifold(),
        PlaneManifold(),
    ]
    values = [
        rng.normal(size=4),
        exp_so3(rng.normal(size=3)).q,
        np.concatenate([rng.normal(size=3), exp_so3(rng.normal(size=3)).q]),
        np.concatenate([[0.3, -0.4, 0.87], [2.0]]),
    ]
    values[3][:3] /= np.linalg.norm(values[3][:3])
    for m, x in zip(manifolds, values):
        delta = rng.normal(size=m.tangent_dim) * 0.3
        y = m.plus(x, delta)
        back = m.minus(y, x)
        assert np.abs(back - delta).max() < 1e-9


def test_plane_manifold_preserves_constraints():
    m = PlaneManifold()
    x = np.array([0.0, 0.0, 1.0, 2.0])
    rng = np.random.default_rng(11)
    for _ in range(100):
        x = m.plus(x, rng.normal(size=3) * 0.5)
        assert abs(np.linalg.norm(x[:3]) - 1.0) < 1e-12
        assert x[3] > 0


def test_fd_jacobian_on_linear_residual():
    p = Problem()
    p.add_parameter_block("x", np.array([1.0, 2.0]))
    A = np.array([[2.0, 0.5], [-1.0, 3.0], [0.0, 1.0]])

    def fn(x):
        return A @ x - np.array([1.0, 0.0, 2.0]), [A]

    block = FunctionResidual(("x",), 3, fn)
    p.add_residual_block(block)
    J = evaluate_jacobians_fd(p, block, "x", step=1e-6)
    assert np.abs(J - A).max() < 1e-9
    with pytest.raises(ValueError):
        evaluate_jacobians_fd(p, block, "x", step=0.0)
