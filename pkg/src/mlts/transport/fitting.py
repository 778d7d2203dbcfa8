"""Quadrature KL objective and Newton fitting of pair maps.

The objective is the negative expected log of target density and map
Jacobian under the base measure, discretized on a tensor Gauss grid. Both
map components are linear in their offset coefficients and quadratic in
their slope coefficients, so value, gradient and most of the Hessian are
exact matrix algebra; only the target's second derivatives use central
differences of its analytic gradient.
"""

import time
from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation, ConvergenceFailure, DegenerateMap
from .basis import make_quadrature, tensor_grid, term_design
from .maps import (
    _GL_NODES,
    _GL_WEIGHTS,
    MapComposition,
    MonotoneComponent,
    TriangularMap,
    identity_pair_map,
)
from .targets import build_pair_target

__all__ = ["FitResult", "kl_objective", "fit_pair_map", "build_level_maps"]

_ARMIJO_C = 1e-4
_MAX_BACKTRACK = 60
_FD_EPS = 1e-5


@dataclass
class FitResult:
    """Outcome of one pair-map fit."""

    pair_map: TriangularMap
    value: float
    grad_norm: float
    iterations: int
    values: list = None


class _Workspace:
    """Precomputed designs for fitting one pair map on a fixed grid."""

    def __init__(self, template: TriangularMap, target, quad_order: int = 10):
        self.target = target
        comp1, comp2 = template.components
        self.terms = (comp1.a_terms, comp1.b_terms, comp2.a_terms, comp2.b_terms)
        rule = make_quadrature(quad_order)
        nodes, self.w = tensor_grid(rule, 2)
        z1, z2 = nodes[:, 0], nodes[:, 1]
        self.z1, self.z2 = z1, z2

        # offset designs; component 1 has an empty prefix
        self.A1 = term_design(comp1.a_terms, z1[:, None][..., :0])
        self.A2 = term_design(comp2.a_terms, z1[:, None])
        # slope designs at the integration endpoint
        self.B1 = term_design(comp1.b_terms, z1[:, None])
        self.B2 = term_design(comp2.b_terms, nodes)
        # integrated outer products: integral_0^{z_i} Psi Psi^T dt per node
        t1 = z1[:, None] * _GL_NODES
        D1 = term_design(comp1.b_terms, t1[..., None])
        self.IBB1 = np.einsum("q,mqa,mqb->mab", _GL_WEIGHTS, D1, D1) * z1[:, None, None]
        t2 = z2[:, None] * _GL_NODES
        args2 = np.stack([np.broadcast_to(z1[:, None], t2.shape), t2], axis=-1)
        D2 = term_design(comp2.b_terms, args2)
        self.IBB2 = np.einsum("q,mqa,mqb->mab", _GL_WEIGHTS, D2, D2) * z2[:, None, None]

        sizes = [len(t) for t in self.terms]
        edges = np.cumsum([0] + sizes)
        self.slices = [slice(edges[i], edges[i + 1]) for i in range(4)]
        self.n_params = edges[-1]

    def pack(self, pair_map: TriangularMap) -> np.ndarray:
        c1, c2 = pair_map.components
        return np.concatenate([c1.a_coeffs, c1.b_coeffs, c2.a_coeffs, c2.b_coeffs])

    def unpack(self, theta: np.ndarray) -> TriangularMap:
        sa1, sc1, sa2, sc2 = self.slices
        comp1 = MonotoneComponent(1, self.terms[0], self.terms[1],
                                  theta[sa1].copy(), theta[sc1].copy())
        comp2 = MonotoneComponent(2, self.terms[2], self.terms[3],
                                  theta[sa2].copy(), theta[sc2].copy())
        return TriangularMap([comp1, comp2])

    def _split(self, theta):
        sa1, sc1, sa2, sc2 = self.slices
        return theta[sa1], theta[sc1], theta[sa2], theta[sc2]

    def value_grad(self, theta, check_degenerate=False):
        """Objective, gradient and reusable per-node quantities.

        Returns (inf, None, None) when the trial point is infeasible, so
        the line search can reject it.
        """
        a1, c1, a2, c2 = self._split(theta)
        T1 = self.A1 @ a1 + np.einsum("mab,a,b->m", self.IBB1, c1, c1)
        T2 = self.A2 @ a2 + np.einsum("mab,a,b->m", self.IBB2, c2, c2)
        b1 = self.B1 @ c1
        b2 = self.B2 @ c2
        if check_degenerate and (not b1.any() or not b2.any()):
            raise DegenerateMap("slope function vanishes on every node")
        b1sq, b2sq = b1 * b1, b2 * b2
        logL = self.target.log_density(T2, T1)
        with np.errstate(divide="ignore", invalid="ignore"):
            integrand = logL + np.log(b1sq) + np.log(b2sq)
        if not np.all(np.isfinite(integrand)):
            return np.inf, None, None
        value = -float(self.w @ integrand)

        Lu, Lv = self.target.grad(T2, T1)
        wLu, wLv = self.w * Lu, self.w * Lv
        g = np.empty(self.n_params)
        sa1, sc1, sa2, sc2 = self.slices
        g[sa1] = -(wLv @ self.A1)
        g[sc1] = -(2.0 * np.einsum("m,mab,b->a", wLv, self.IBB1, c1)
                   + 2.0 * ((self.w / b1) @ self.B1))
        g[sa2] = -(wLu @ self.A2)
        g[sc2] = -(2.0 * np.einsum("m,mab,b->a", wLu, self.IBB2, c2)
                   + 2.0 * ((self.w / b2) @ self.B2))
        aux = {"T1": T1, "T2": T2, "b1": b1, "b2": b2,
               "Lu": Lu, "Lv": Lv, "c1": c1, "c2": c2}
        return value, g, aux

    def _target_hessian(self, T2, T1):
        """Per-node 2x2 second derivatives of log pi by central differences."""
        eu = _FD_EPS * (1.0 + np.abs(T2))
        ev = _FD_EPS * (1.0 + np.abs(T1))
        up_u = self.target.grad(T2 + eu, T1)
        dn_u = self.target.grad(T2 - eu, T1)
        up_v = self.target.grad(T2, T1 + ev)
        dn_v = self.target.grad(T2, T1 - ev)
        Luu = (up_u[0] - dn_u[0]) / (2 * eu)
        Lvu = (up_u[1] - dn_u[1]) / (2 * eu)
        Luv = (up_v[0] - dn_v[0]) / (2 * ev)
        Lvv = (up_v[1] - dn_v[1]) / (2 * ev)
        Luv = 0.5 * (Luv + Lvu)
        return Luu, Luv, Lvv

    def _jacobian_rows(self, aux):
        """d(T2)/dtheta and d(T1)/dtheta as (n_nodes, n_params) arrays."""
        sa1, sc1, sa2, sc2 = self.slices
        Pu = np.zeros((self.w.size, self.n_params))
        Pv = np.zeros((self.w.size, self.n_params))
        Pu[:, sa2] = self.A2
        Pu[:, sc2] = 2.0 * np.einsum("mab,b->ma", self.IBB2, aux["c2"])
        Pv[:, sa1] = self.A1
        Pv[:, sc1] = 2.0 * np.einsum("mab,b->ma", self.IBB1, aux["c1"])
        return Pu, Pv

    def hessian(self, aux, gauss_newton=False):
        Luu, Luv, Lvv = self._target_hessian(aux["T2"], aux["T1"])
        Pu, Pv = self._jacobian_rows(aux)
        sa1, sc1, sa2, sc2 = self.slices
        H = np.zeros((self.n_params, self.n_params))

        if gauss_newton:
            # project each per-node -hess(log pi) onto the PSD cone
            neg = -np.stack([np.stack([Luu, Luv], -1),
                             np.stack([Luv, Lvv], -1)], -2)
            vals, vecs = np.linalg.eigh(neg)
            vals = np.clip(vals, 0.0, None)
            proj = np.einsum("mij,mj,mkj->mik", vecs, vals, vecs)
            Luu, Luv, Lvv = -proj[:, 0, 0], -proj[:, 0, 1], -proj[:, 1, 1]

        H -= np.einsum("m,ma,mb->ab", self.w * Luu, Pu, Pu)
        H -= np.einsum("m,ma,mb->ab", self.w * Luv, Pu, Pv)
        H -= np.einsum("m,ma,mb->ab", self.w * Luv, Pv, Pu)
        H -= np.einsum("m,ma,mb->ab", self.w * Lvv, Pv, Pv)
        if not gauss_newton:
            # curvature of the map itself, nonzero only in the slope blocks
            H[sc2, sc2] -= 2.0 * np.einsum("m,mab->ab", self.w * aux["Lu"], self.IBB2)
            H[sc1, sc1] -= 2.0 * np.einsum("m,mab->ab", self.w * aux["Lv"], self.IBB1)
        # log-slope terms contribute a positive definite piece
        H[sc1, sc1] += 2.0 * np.einsum("m,ma,mb->ab", self.w / aux["b1"] ** 2,
                                       self.B1, self.B1)
        H[sc2, sc2] += 2.0 * np.einsum("m,ma,mb->ab", self.w / aux["b2"] ** 2,
                                       self.B2, self.B2)
        return 0.5 * (H + H.T)


def _cg(H, rhs, tol):
    """Conjugate gradients with negative-curvature detection."""
    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    rs = r @ r
    for _ in range(2 * rhs.size):
        Hp = H @ p
        curv = p @ Hp
        if curv <= 1e-12 * (p @ p):
            # fall back to steepest descent if no progress was made yet
            return (x if x.any() else rhs.copy()), True
        alpha = rs / curv
        x += alpha * p
        r -= alpha * Hp
        rs_new = r @ r
        if np.sqrt(rs_new) <= tol:
            return x, False
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, False


def _minimize(workspace, theta0, tol, max_iter, active=None, trace=None):
    """Newton iterations over the coordinates selected by `active`."""
    theta = np.asarray(theta0, dtype=float).copy()
    if active is None:
        active = np.ones(theta.size, dtype=bool)
    value, grad, aux = workspace.value_grad(theta)
    if not np.isfinite(value):
        raise DegenerateMap("objective not finite at the initial point")
    if trace is not None:
        trace.append(value)
    grad_norm = float(np.linalg.norm(grad[active]))
    for iteration in range(max_iter):
        if grad_norm <= tol:
            return theta, value, grad_norm, iteration
        g = grad[active]
        cg_tol = min(0.5, np.sqrt(grad_norm)) * grad_norm
        H = workspace.hessian(aux)[np.ix_(active, active)]
        step, bad = _cg(H, -g, cg_tol)
        if bad or step @ g >= 0:
            H = workspace.hessian(aux, gauss_newton=True)[np.ix_(active, active)]
            H[np.diag_indices_from(H)] += 1e-10
            step, _ = _cg(H, -g, cg_tol)
        if step @ g >= 0:
            step = -g
        direction = np.zeros_like(theta)
        direction[active] = step

        slope = step @ g
        alpha = 1.0
        for _ in range(_MAX_BACKTRACK):
            trial = theta + alpha * direction
            t_value, t_grad, t_aux = workspace.value_grad(trial)
            if t_value <= value + _ARMIJO_C * alpha * slope:
                break
            alpha *= 0.5
        else:
            raise ConvergenceFailure(
                "line search failed", grad_norm=grad_norm, iterations=iteration
            )
        theta, value, grad, aux = trial, t_value, t_grad, t_aux
        if trace is not None:
            trace.append(value)
        grad_norm = float(np.linalg.norm(grad[active]))
    raise ConvergenceFailure(
        f"no convergence in {max_iter} iterations",
        grad_norm=grad_norm,
        iterations=max_iter,
    )


def kl_objective(pair_map: TriangularMap, target, quad_order: int = 10):
    """Objective value and coefficient gradient at the map's coefficients.

    Coefficients are ordered (offset 1, slope 1, offset 2, slope 2).
    """
    workspace = _Workspace(pair_map, target, quad_order)
    value, grad, _ = workspace.value_grad(workspace.pack(pair_map),
                                          check_degenerate=True)
    return value, grad


def fit_pair_map(target, order: int = 4, quad_order: int = 10,
                 tol: float = 1e-4, max_iter: int = 200,
                 full_output: bool = False):
    """Fit one pair map to a target by Newton iterations from the identity.

    Fitting is staged: first the offsets together with constant slopes
    (the affine subfamily, which is reliably unimodal), then all slope
    terms from that point. The quadratic slope parameterization admits
    spurious local minima when started too far away; near the affine
    optimum the full Newton iteration stays in the right basin.
    """
    if tol <= 0:
        raise ContractViolation("tolerance must be positive")
    template = identity_pair_map(order)
    workspace = _Workspace(template, target, quad_order)
    theta0 = workspace.pack(template)

    sa1, sc1, sa2, sc2 = workspace.slices
    affine = np.zeros(workspace.n_params, dtype=bool)
    affine[sa1] = affine[sa2] = True
    affine[sc1.start] = affine[sc2.start] = True
    trace = [] if full_output else None
    theta1, _, _, it1 = _minimize(workspace, theta0, tol, max_iter,
                                  active=affine, trace=trace)
    theta, value, grad_norm, it2 = _minimize(workspace, theta1, tol, max_iter,
                                             trace=trace)
    fitted = workspace.unpack(theta)
    if full_output:
        return FitResult(fitted, value, grad_norm, it1 + it2, trace)
    return fitted


def level_tolerance(level: int) -> float:
    """Per-level tolerance schedule 10^(-level-1)."""
    return 10.0 ** (-level - 1)


def build_level_maps(model, obs_model, record, level: int, order: int = 4,
                     quad_order: int = 10, tol: float = 1e-4,
                     tol_schedule=None, max_iter: int = 200) -> MapComposition:
    """Fit the whole backward-compatible chain of pair maps for one level.

    Step j consumes the filter component fitted at step j-1. The returned
    composition's meta records per-step iteration counts and wall time.
    """
    if level < 0:
        raise ContractViolation("level must be nonnegative")
    effective_tol = tol_schedule(level) if tol_schedule is not None else tol
    n_obs = len(record) - 1
    n_steps = 2**level * n_obs
    started = time.perf_counter()
    maps = []
    iterations = []
    upstream = None
    for step in range(n_steps):
        target = build_pair_target(model, obs_model, record, level, step,
                                   upstream=upstream)
        try:
            result = fit_pair_map(target, order, quad_order, effective_tol,
                                  max_iter, full_output=True)
        except ConvergenceFailure as exc:
            exc.context = f"level {level}, step {step}"
            raise
        maps.append(result.pair_map)
        iterations.append(result.iterations)
        upstream = result.pair_map.filter_component
    meta = {
        "tol": effective_tol,
        "quad_order": quad_order,
        "iterations": iterations,
        "fit_seconds": time.perf_counter() - started,
    }
    return MapComposition(maps, level, n_obs, model.obs_interval, order,
                          model.name, meta)
