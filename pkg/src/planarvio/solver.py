"""Dense nonlinear least-squares: dogleg trust region and marginalization.

A Problem is a set of named parameter blocks (each with a manifold giving
tangent dimension and plus/minus maps) and residual blocks referencing
them. Robust losses are handled by first-order reweighting. Marginalization
forms the Schur complement of dropped blocks in the Gauss-Newton system and
re-expresses it as a square-root prior against the stored linearization
point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .geometry import (
    Rotation,
    exp_so3,
    log_so3,
    quat_multiply,
    unit_vector_basis,
)


class EuclideanManifold:
    def __init__(self, dim):
        self.ambient_dim = dim
        self.tangent_dim = dim

    def plus(self, x, delta):
        return x + delta

    def minus(self, x, y):
        return x - y


class RotationManifold:
    """Quaternion (w, x, y, z) with right-multiplicative tangent."""

    ambient_dim = 4
    tangent_dim = 3

    def plus(self, x, delta):
        q = quat_multiply(x, exp_so3(delta).q)
        q = q / np.linalg.norm(q)
        return q if q[0] >= 0 else -q

    def minus(self, x, y):
        return log_so3(Rotation(y).inverse() * Rotation(x))


class PoseManifold:
    """(tx, ty, tz, qw, qx, qy, qz); tangent (dt additive, dtheta right)."""

    ambient_dim = 7
    tangent_dim = 6
    _rot = RotationManifold()

    def plus(self, x, delta):
        out = np.empty(7)
        out[:3] = x[:3] + delta[:3]
        out[3:] = self._rot.plus(x[3:], delta[3:])
        return out

    def minus(self, x, y):
        return np.concatenate([x[:3] - y[:3], self._rot.minus(x[3:], y[3:])])


class PlaneManifold:
    """(nx, ny, nz, d); tangent rotates n in its tangent plane and applies
    a multiplicative (log) update to d > 0. The distance coordinate can be
    frozen for gauge fixing."""

    def __init__(self, fix_distance=False):
        self.ambient_dim = 4
        self.tangent_dim = 2 if fix_distance else 3
        self.fix_distance = fix_distance

    def plus(self, x, delta):
        n = x[:3]
        b1, b2 = unit_vector_basis(n)
        axis = delta[0] * b1 + delta[1] * b2
        n_new = exp_so3(axis).apply(n)
        d_new = x[3] if self.fix_distance else x[3] * np.exp(delta[2])
        return np.concatenate([n_new, [d_new]])

    def minus(self, x, y):
        ny, nx_ = y[:3], x[:3]
        b1, b2 = unit_vector_basis(ny)
        axis = np.cross(ny, nx_)
        s = np.linalg.norm(axis)
        c = float(np.clip(ny @ nx_, -1.0, 1.0))
        if s < 1e-12:
            w = np.zeros(3)
        else:
            w = axis / s * np.arctan2(s, c)
        out = [w @ b1, w @ b2]
        if not self.fix_distance:
            out.append(np.log(x[3] / y[3]))
        return np.array(out)


@dataclass(frozen=True)
class CauchyLoss:
    """rho(s) = c^2 log(1 + s/c^2) with first-order reweighting."""

    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("Cauchy scale must be positive")

    def cost(self, sq_norm):
        c2 = self.scale * self.scale
        return c2 * np.log1p(sq_norm / c2)

    def weight(self, sq_norm):
        return 1.0 / np.sqrt(1.0 + sq_norm / (self.scale * self.scale))


class ResidualBlock:
    """Base class; subclasses set .params (block keys), .dim, .loss and
    implement evaluate(*values) -> (residual, [jacobians per param])."""

    params: tuple
    dim: int
    loss = None

    def evaluate(self, *values):
        raise NotImplementedError

    def contribute(self, *values):
        """(rows, jacobian rows, cost) entering the Gauss-Newton system.

        Default: robust reweighting of evaluate() by self.loss. Batched
        blocks override this to weight factor-wise."""
        r, jacs = self.evaluate(*values)
        sq = float(r @ r)
        if self.loss is None:
            return r, jacs, 0.5 * sq
        w = self.loss.weight(sq)
        return w * r, [None if j is None else w * j for j in jacs], 0.5 * self.loss.cost(sq)


class FunctionResidual(ResidualBlock):
    """Residual from a callable f(*values) -> (r, jacobians)."""

    def __init__(self, params, dim, fn, loss=None):
        self.params = tuple(params)
        self.dim = dim
        self._fn = fn
        self.loss = loss

    def evaluate(self, *values):
        return self._fn(*values)


@dataclass
class _ParameterBlock:
    value: np.ndarray
    manifold: object
    fixed: bool = False


class Problem:
    def __init__(self):
        self.blocks: dict = {}
        self.residuals: list = []

    def add_parameter_block(self, key, value, manifold=None, fixed=False):
        value = np.atleast_1d(np.asarray(value, dtype=float)).copy()
        if manifold is None:
            manifold = EuclideanManifold(value.size)
        if key in self.blocks:
            raise ValueError(f"duplicate parameter block {key!r}")
        self.blocks[key] = _ParameterBlock(value, manifold, fixed)

    def add_residual_block(self, block: ResidualBlock):
        for k in block.params:
            if k not in self.blocks:
                raise ValueError(f"residual references unknown block {k!r}")
        self.residuals.append(block)

    def set_fixed(self, key, fixed=True):
        self.blocks[key].fixed = fixed

    def value(self, key):
        return self.blocks[key].value

    def set_value(self, key, value):
        self.blocks[key].value = np.atleast_1d(np.asarray(value, dtype=float)).copy()

    # -- linearization ---------------------------------------------------

    def free_layout(self):
        """Column offsets of free blocks in the stacked tangent space."""
        offsets = {}
        col = 0
        for key, blk in self.blocks.items():
            if not blk.fixed:
                offsets[key] = col
                col += blk.manifold.tangent_dim
        return offsets, col

    def build_system(self):
        """Stacked (J, r, cost) at the current values, losses applied."""
        offsets, ncols = self.free_layout()
        nrows = sum(b.dim for b in self.residuals)
        J = np.zeros((nrows, ncols))
        r = np.zeros(nrows)
        cost = 0.0
        row = 0
        for block in self.residuals:
            values = [self.blocks[k].value for k in block.params]
            res, jacs, c = block.contribute(*values)
            cost += c
            r[row : row + block.dim] = res
            for key, jac in zip(block.params, jacs):
                if jac is None or self.blocks[key].fixed:
                    continue
                c0 = offsets[key]
                J[row : row + block.dim, c0 : c0 + jac.shape[1]] = jac
            row += block.dim
        return J, r, cost

    def total_cost(self):
        cost = 0.0
        for block in self.residuals:
            values = [self.blocks[k].value for k in block.params]
            cost += block.contribute(*values)[2]
        return cost

    def apply_step(self, offsets, delta):
        for key, c0 in offsets.items():
            blk = self.blocks[key]
            td = blk.manifold.tangent_dim
            blk.value = blk.manifold.plus(blk.value, delta[c0 : c0 + td])

    def snapshot(self):
        return {k: b.value.copy() for k, b in self.blocks.items()}

    def restore(self, snap):
        for k, v in snap.items():
            self.blocks[k].value = v.copy()


@dataclass
class SolveOptions:
    max_iterations: int = 30
    gradient_tol: float = 1e-10
    relative_cost_tol: float = 1e-9
    initial_radius: float = 1e4
    max_radius: float = 1e8
    min_radius: float = 1e-12


@dataclass
class SolveReport:
    iterations: int = 0
    initial_cost: float = 0.0
    final_cost: float = 0.0
    termination: str = ""
    accepted_steps: int = 0
    rejected_steps: int = 0
    costs: list = field(default_factory=list)


def _solve_spd(H, g, lam0=1e-12):
    """Cholesky solve of H x = g with escalating diagonal regularization."""
    lam = lam0
    scale = max(np.max(np.abs(np.diag(H))), 1.0)
    for _ in range(12):
        try:
            L = np.linalg.cholesky(H + lam * scale * np.eye(H.shape[0]))
            y = scipy.linalg.solve_triangular(L, g, lower=True)
            return scipy.linalg.solve_triangular(L.T, y, lower=False)
        except np.linalg.LinAlgError:
            lam = max(lam * 100.0, 1e-10)
    raise np.linalg.LinAlgError("normal matrix factorization failed")


def solve(problem: Problem, opts: SolveOptions | None = None) -> SolveReport:
    """Powell dogleg trust-region minimization over the problem manifolds.

    Robustified residuals enter the Gauss-Newton model through first-order
    reweighting. The cost over accepted steps is non-increasing.
    """
    if opts is None:
        opts = SolveOptions()
    if not problem.residuals:
        raise ValueError("problem has no residual blocks")

    report = SolveReport()
    offsets, ncols = problem.free_layout()
    if ncols == 0:
        report.termination = "all blocks fixed"
        report.initial_cost = report.final_cost = problem.total_cost()
        return report

    J, r, cost = problem.build_system()
    if not np.isfinite(cost):
        raise ValueError("non-finite residual at the initial point")
    report.initial_cost = cost
    report.costs.append(cost)
    radius = opts.initial_radius

    for it in range(opts.max_iterations):
        report.iterations = it + 1
        g = J.T @ r
        gnorm = np.max(np.abs(g)) if g.size else 0.0
        if gnorm < opts.gradient_tol:
            report.termination = "gradient tolerance"
            break
        H = J.T @ J

        try:
            h_gn = _solve_spd(H, -g)
        except np.linalg.LinAlgError:
            report.termination = "factorization failure"
            break
        Jg = J @ g
        denom = float(Jg @ Jg)
        alpha = float(g @ g) / denom if denom > 0 else 0.0
        h_sd = -alpha * g

        accepted = False
        while radius >= opts.min_radius:
            gn_norm = np.linalg.norm(h_gn)
            sd_norm = np.linalg.norm(h_sd)
            if gn_norm <= radius:
                h = h_gn
            elif sd_norm >= radius:
                h = h_sd * (radius / sd_norm)
            else:
                d = h_gn - h_sd
                a = float(d @ d)
                b = 2.0 * float(h_sd @ d)
                c = float(h_sd @ h_sd) - radius * radius
                disc = max(b * b - 4 * a * c, 0.0)
                beta = (-b + np.sqrt(disc)) / (2 * a)
                h = h_sd + beta * d
            predicted = -(float(g @ h) + 0.5 * float(h @ (H @ h)))
            snap = problem.snapshot()
            problem.apply_step(offsets, h)
            try:
                J_new, r_new, cost_new = problem.build_system()
            except (ValueError, FloatingPointError):
                cost_new = np.inf
                J_new = r_new = None
            actual = cost - cost_new if np.isfinite(cost_new) else -np.inf
            rho = actual / predicted if predicted > 0 else -1.0
            if actual > 0 and rho > 0:
                accepted = True
                report.accepted_steps += 1
                if rho > 0.75 and np.linalg.norm(h) > 0.9 * radius:
                    radius = min(3.0 * radius, opts.max_radius)
                elif rho < 0.25:
                    radius *= 0.5
                rel_drop = actual / max(cost, 1e-300)
                J, r = J_new, r_new
                cost = cost_new
                report.costs.append(cost)
                if rel_drop < opts.relative_cost_tol:
                    report.termination = "cost tolerance"
                break
            problem.restore(snap)
            report.rejected_steps += 1
            radius *= 0.5
        if not accepted:
            report.termination = report.termination or "trust region collapsed"
            break
        if report.termination:
            break
    if not report.termination:
        report.termination = "max iterations"
    report.final_cost = cost
    return report


@dataclass
class MarginalizationPrior:
    """Linearized Gaussian prior in sqrt form: r(x) = r0 + J (x [-] x_lin)."""

    keys: list
    linearization: dict
    manifolds: dict
    jacobian: np.ndarray
    residual: np.ndarray

    def tangent_offsets(self):
        offsets = {}
        col = 0
        for k in self.keys:
            offsets[k] = col
            col += self.manifolds[k].tangent_dim
        return offsets, col

    @property
    def is_empty(self):
        return self.residual.size == 0 or not self.keys

    def as_residual_block(self):
        return _PriorResidual(self)


class _PriorResidual(ResidualBlock):
    def __init__(self, prior: MarginalizationPrior):
        self.prior = prior
        self.params = tuple(prior.keys)
        self.dim = prior.residual.size
        self.loss = None
        self._offsets, self._ncols = prior.tangent_offsets()

    def evaluate(self, *values):
        prior = self.prior
        dx = np.zeros(self._ncols)
        jacs = []
        for k, v in zip(prior.keys, values):
            c0 = self._offsets[k]
            td = prior.manifolds[k].tangent_dim
            dx[c0 : c0 + td] = prior.manifolds[k].minus(v, prior.linearization[k])
            jacs.append(prior.jacobian[:, c0 : c0 + td])
        return prior.residual + prior.jacobian @ dx, jacs


def marginalize(problem: Problem, blocks_to_drop) -> MarginalizationPrior:
    """Schur-complement the dropped blocks out of the Gauss-Newton system.

    The problem must contain every residual touching a dropped block,
    linearized at the current values. Rank deficiency is handled by
    truncating eigenvalues below 1e-10 when forming the square root.
    """
    drop = set(blocks_to_drop)
    for key in drop:
        if key not in problem.blocks:
            raise ValueError(f"unknown block {key!r}")

    touched = set()
    for res in problem.residuals:
        touched.update(k for k in res.params if not problem.blocks[k].fixed)
    keep = sorted((k for k in touched if k not in drop), key=repr)
    drop_present = sorted((k for k in touched if k in drop), key=repr)

    if not keep:
        return MarginalizationPrior([], {}, {}, np.zeros((0, 0)), np.zeros(0))

    order = drop_present + keep
    offsets = {}
    col = 0
    for k in order:
        offsets[k] = col
        col += problem.blocks[k].manifold.tangent_dim
    nd = sum(problem.blocks[k].manifold.tangent_dim for k in drop_present)

    H = np.zeros((col, col))
    g = np.zeros(col)
    for res in problem.residuals:
        values = [problem.blocks[k].value for k in res.params]
        rows, jacs, _ = res.contribute(*values)
        entries = []
        for k, jac in zip(res.params, jacs):
            if jac is None or problem.blocks[k].fixed:
                continue
            entries.append((offsets[k], jac))
        for c0, jac in entries:
            g[c0 : c0 + jac.shape[1]] += jac.T @ rows
            for c1, jac2 in entries:
                H[c0 : c0 + jac.shape[1], c1 : c1 + jac2.shape[1]] += jac.T @ jac2

    Hdd = H[:nd, :nd]
    Hdk = H[:nd, nd:]
    Hkk = H[nd:, nd:]
    gd = g[:nd]
    gk = g[nd:]

    if nd > 0:
        w, V = np.linalg.eigh(0.5 * (Hdd + Hdd.T))
        tol = 1e-10 * max(float(w.max()), 1.0)
        inv_w = np.where(w > tol, 1.0 / np.maximum(w, 1e-300), 0.0)
        Hdd_inv = (V * inv_w) @ V.T
        Hs = Hkk - Hdk.T @ Hdd_inv @ Hdk
        gs = gk - Hdk.T @ Hdd_inv @ gd
    else:
        Hs = Hkk
        gs = gk

    Hs = 0.5 * (Hs + Hs.T)
    w, V = np.linalg.eigh(Hs)
    mask = w > 1e-10
    sqrt_w = np.sqrt(w[mask])
    Vk = V[:, mask]
    J_prior = (Vk * sqrt_w).T
    r_prior = (Vk / sqrt_w).T @ gs

    return MarginalizationPrior(
        keys=keep,
        linearization={k: problem.blocks[k].value.copy() for k in keep},
        manifolds={k: problem.blocks[k].manifold for k in keep},
        jacobian=J_prior,
        residual=r_prior,
    )


def evaluate_jacobians_fd(problem: Problem, residual: ResidualBlock, key, step=1e-6):
    """Central-difference Jacobian of a residual block w.r.t. one block's
    manifold tangent. Verification utility."""
    if step <= 0:
        raise ValueError("step must be positive")
    blk = problem.blocks[key]
    td = blk.manifold.tangent_dim
    base_values = [problem.blocks[k].value for k in residual.params]
    idx = list(residual.params).index(key)
    r0, _ = residual.evaluate(*base_values)
    J = np.zeros((r0.size, td))
    for c in range(td):
        delta = np.zeros(td)
        delta[c] = step
        vp = list(base_values)
        vp[idx] = blk.manifold.plus(blk.value, delta)
        rp, _ = residual.evaluate(*vp)
        vm = list(base_values)
        vm[idx] = blk.manifold.plus(blk.value, -delta)
        rm, _ = residual.evaluate(*vm)
        J[:, c] = (rp - rm) / (2 * step)
    return J
