"""GMRF priors from SPDEs: Whittle-Matern fields and implicit-Euler space-time priors."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi, sqrt

import numpy as np
import scipy.sparse as sp

from .errors import ContractError
from .fem.assembly import (
    DifferentialOperatorSpec,
    assemble_mass,
    assemble_stiffness,
    lump_mass,
    lump_mass_auto,
)
from .fem.constraints import (
    DEFAULT_BOUNDARY_EPS2,
    Constraint,
    ConstraintSet,
    apply_constraints,
    dirichlet_constraints,
)
from .fem.mesh import build_interval_mesh_from_nodes, build_rect_mesh
from .fem.quadrature import gauss_interval
from .fem.space import build_space
from .gmrf import GMRF, factor_sqrt
from .sparse.cholesky import analyze, factorize, selected_inverse_diagonal
from .sparse.csc import as_csc, symmetrize


# --------------------------------------------------------------------------
# Matern fields
# --------------------------------------------------------------------------

def smoothness(alpha, dim):
    return alpha - dim / 2.0


def matern_variance(kappa, alpha, dim, tau=1.0):
    """Stationary marginal variance of ``(kappa^2 - Laplace)^{alpha/2} u = tau W``."""
    nu = smoothness(alpha, dim)
    if nu <= 0:
        raise ContractError("marginal variance is infinite for alpha <= dim / 2")
    return tau**2 * gamma(nu) / (gamma(alpha) * (4 * pi) ** (dim / 2) * kappa ** (2 * nu))


@dataclass(frozen=True)
class MaternSpec:
    """``(kappa^2 - Laplace)^{alpha/2} u = tau W`` with integer ``alpha``."""

    kappa: float
    alpha: int = 2
    tau: float = 1.0

    def __post_init__(self):
        if isinstance(self.alpha, bool) or int(self.alpha) != self.alpha or self.alpha < 1:
            raise ContractError(f"alpha must be an integer >= 1, got {self.alpha!r}")
        object.__setattr__(self, "alpha", int(self.alpha))
        if not self.kappa > 0:
            raise ContractError("kappa must be positive")
        if not self.tau > 0:
            raise ContractError("tau must be positive")

    @classmethod
    def from_range(cls, range_, alpha, dim, variance=None, tau=1.0):
        """``kappa = sqrt(8 nu) / range``; ``variance`` overrides ``tau``."""
        nu = smoothness(alpha, dim)
        if nu <= 0:
            raise ContractError("the range convention needs alpha > dim / 2")
        if not range_ > 0:
            raise ContractError("range must be positive")
        kappa = sqrt(8 * nu) / range_
        if variance is not None:
            tau = sqrt(variance / matern_variance(kappa, alpha, dim, 1.0))
        return cls(kappa, alpha, tau)

    def range(self, dim):
        return sqrt(8 * smoothness(self.alpha, dim)) / self.kappa

    def variance(self, dim):
        return matern_variance(self.kappa, self.alpha, dim, self.tau)


def _lumped(M, lumping):
    if lumping == "auto":
        return lump_mass_auto(M).diagonal()
    return lump_mass(M, lumping).diagonal()


def _decouple(Q, S, cs):
    """Give constrained DoFs the independent precision ``1/eps^2``."""
    if len(cs) == 0:
        return Q, S
    k = cs.constrained
    eps2 = np.maximum(cs.eps2, 1e-300)
    keep = np.ones(Q.shape[0])
    keep[k] = 0.0
    D = sp.diags(keep)
    pin = np.zeros(Q.shape[0])
    pin[k] = 1.0 / eps2
    Q = as_csc(D @ Q @ D + sp.diags(pin))
    Q.eliminate_zeros()
    if S is not None:
        cols = sp.csc_matrix((1.0 / np.sqrt(eps2), (k, np.arange(k.size))), shape=(Q.shape[0], k.size))
        S = as_csc(sp.hstack([D @ S, cols]))
        S.eliminate_zeros()
    return Q, S


def _to_actual(Q, S, cs):
    """Deviation coordinates ``u' = T^{-1} u`` -> precision and sqrt of ``u``."""
    if len(cs) == 0 or all(len(c.masters) == 0 for c in cs.constraints):
        return Q, S
    Ti = cs.transform_inverse()
    Q = symmetrize(Ti.T @ Q @ Ti)
    S = None if S is None else as_csc(Ti.T @ S)
    return Q, S


def matern_operator(space, spec, cs=None, lumping="auto"):
    """Constrained stiffness ``K' = kappa^2 M + K_Laplace`` and lumped mass (vector)."""
    cs = ConstraintSet.empty(space.n_dofs) if cs is None else cs
    M = assemble_mass(space)
    K = assemble_stiffness(space, DifferentialOperatorSpec(diffusion=1.0, reaction=spec.kappa**2))
    K, M = apply_constraints(K, M, cs, "precision_pair")
    return K, M, _lumped(M, lumping)


def _matern_deviation(space, spec, cs, lumping, with_sqrt):
    K, _, mt = matern_operator(space, spec, cs, lumping)
    inv_m = sp.diags(1.0 / mt)
    t2 = spec.tau**2
    if spec.alpha % 2 == 0:
        Q = symmetrize(K.T @ inv_m @ K) / t2
        S = as_csc(K.T @ sp.diags(1.0 / np.sqrt(mt))) / spec.tau if with_sqrt else None
        steps = (spec.alpha - 2) // 2
    else:
        Q = symmetrize(K) / t2
        S = None
        if with_sqrt:
            S = factor_sqrt(factorize(Q, analyze(Q)))
        steps = (spec.alpha - 1) // 2
    for _ in range(steps):
        W = inv_m @ K
        Q = symmetrize(W.T @ Q @ W)
        if S is not None:
            S = as_csc(W.T @ S)
    return _decouple(as_csc(Q), S, cs)


def matern_prior(space, spec, cs=None, lumping="auto", with_sqrt=True):
    """Zero-mean GMRF with precision from the FEM discretized Matern SPDE.

    Odd ``alpha``: ``Q_1 = K / tau^2``; even: ``Q_2 = K M~^{-1} K / tau^2``; and
    ``Q_a = K M~^{-1} Q_{a-2} M~^{-1} K``.  Constrained DoFs (``cs``) get
    independent ``N(0, eps^2)`` deviations from their constraint.
    """
    cs = ConstraintSet.empty(space.n_dofs) if cs is None else cs
    Q, S = _matern_deviation(space, spec, cs, lumping, with_sqrt)
    Q, S = _to_actual(Q, S, cs)
    return GMRF(np.zeros(space.n_dofs), Q, sqrt=S, check=False)


# --------------------------------------------------------------------------
# linear proxy operators
# --------------------------------------------------------------------------

def linear_proxy_operator(kind="advection_diffusion", c=(0.0,), nu=0.0):
    """Spatial operator ``c . grad u - nu Laplace u``."""
    if kind != "advection_diffusion":
        raise ContractError(f"unknown proxy kind {kind!r}")
    if nu < 0:
        raise ContractError("nu must be non-negative")
    c = tuple(float(v) for v in np.atleast_1d(c))
    return DifferentialOperatorSpec(diffusion=float(nu), advection=c)


def average_initial_value(u0, a=0.0, b=1.0, n_points=64):
    """``(1 / (b - a)) int_a^b u0(x) dx`` by Gauss-Legendre quadrature."""
    x, w = gauss_interval(n_points)
    return float(np.sum(w * np.asarray(u0(a + (b - a) * x), dtype=float)))


# --------------------------------------------------------------------------
# boundary handling
# --------------------------------------------------------------------------

def embed_boundary(space, bc="dirichlet", eps=DEFAULT_BOUNDARY_EPS2, tags=None):
    """Constraint set for homogeneous Dirichlet or periodic boundaries.

    ``eps`` is the constraint noise variance.  Periodic boundaries identify
    every DoF on an upper side (right/top) with its mirror on the lower side.
    """
    if bc == "dirichlet":
        return dirichlet_constraints(space.boundary_dofs(tags), space.n_dofs, eps)
    if bc != "periodic":
        raise ContractError(f"unknown boundary treatment {bc!r}")
    X = space.dof_coords
    bounds = space.mesh.bounds
    lookup = {tuple(np.round(x, 10)): i for i, x in enumerate(X)}
    out = []
    for i, x in enumerate(X):
        y = x.copy()
        for d, (lo, hi) in enumerate(bounds):
            if abs(x[d] - hi) <= 1e-10 * (hi - lo):
                y[d] = lo
        if np.array_equal(x, y):
            continue
        j = lookup.get(tuple(np.round(y, 10)))
        if j is None:
            raise ContractError(f"DoF {i} at {x} has no periodic partner")
        out.append(Constraint(i, (j,), (1.0,), eps))
    return ConstraintSet(space.n_dofs, tuple(out))


def _inflated_breaks(lo, hi, n, width, growth):
    inner = np.linspace(lo, hi, n + 1)
    if width <= 0:
        return inner
    h = (hi - lo) / n
    m = max(1, int(round(width / (h * (1 + growth) / 2))))
    sizes = h * np.linspace(1.0, growth, m + 1)[1:]
    sizes *= width / sizes.sum()
    right = hi + np.cumsum(sizes)
    left = lo - np.cumsum(sizes)[::-1]
    return np.concatenate([left, inner, right])


@dataclass(frozen=True)
class InflatedSpace:
    space: object
    restriction: sp.csc_matrix
    interior_dofs: np.ndarray

    def prolongation(self):
        return as_csc(self.restriction.T)


def inflate_domain_1d_2d(dim, n_per_dim, order=1, width=0.15, growth=2.0, bounds=(0.0, 1.0)):
    """Space on ``[lo - width, hi + width]^dim`` with exterior elements growing to ``growth`` times the interior size.

    The restriction matrix selects the DoFs inside the original domain.
    """
    if width < 0:
        raise ContractError("inflation width must be non-negative")
    if growth < 1:
        raise ContractError("growth must be at least 1")
    lo, hi = bounds
    g = _inflated_breaks(lo, hi, n_per_dim, width, growth)
    mesh = build_interval_mesh_from_nodes(g) if dim == 1 else build_rect_mesh(g, g)
    space = build_space(mesh, order)
    tol = 1e-10 * (hi - lo)
    inside = np.all((space.dof_coords >= lo - tol) & (space.dof_coords <= hi + tol), axis=1)
    idx = np.flatnonzero(inside)
    R = sp.csc_matrix((np.ones(idx.size), (np.arange(idx.size), idx)), shape=(idx.size, space.n_dofs))
    return InflatedSpace(space, R, idx)


# --------------------------------------------------------------------------
# space-time prior
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SpatiotemporalSpec:
    """``du/dt + L_s u = tau W_t x W_s`` discretized by implicit Euler on ``t_grid``."""

    t_grid: np.ndarray
    spatial_op: DifferentialOperatorSpec
    noise_spec: MaternSpec
    tau: float
    initial_spec: MaternSpec

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
            raise ContractError("t_grid must be strictly increasing with at least 2 points")
        object.__setattr__(self, "t_grid", t)
        if not self.tau > 0:
            raise ContractError("tau must be positive")

    @property
    def n_t(self):
        return self.t_grid.size


@dataclass
class TransitionBlock:
    """One implicit-Euler step; ``A = G^{-1} M`` is applied, never formed."""

    dt: float
    G: sp.csc_matrix
    M: sp.csc_matrix
    F_inv: sp.csc_matrix
    F_inv_A: sp.csc_matrix
    At_F_inv_A: sp.csc_matrix
    F_inv_sqrt: sp.csc_matrix  # R with R R^T = F^{-1}
    At_F_inv_sqrt: sp.csc_matrix
    _g_factor: object = None

    def transition(self, u):
        if self._g_factor is None:
            from scipy.sparse.linalg import splu
            self._g_factor = splu(as_csc(self.G))
        return self._g_factor.solve(self.M @ u)


@dataclass
class SpatiotemporalPrior:
    n_space: int
    t_grid: np.ndarray
    blocks: list
    Q1: sp.csc_matrix
    joint_precision: sp.csc_matrix
    joint_sqrt: sp.csc_matrix
    constraints: ConstraintSet = None

    @property
    def n_t(self):
        return self.t_grid.size

    def unflatten(self, x):
        return np.asarray(x).reshape(self.n_t, self.n_space)

    def flatten(self, U):
        return np.asarray(U).reshape(-1)

    def slice_index(self, i):
        return np.arange(i * self.n_space, (i + 1) * self.n_space)


def _step_blocks(dt, K, M, mt, Qs, Ls, tau):
    G = as_csc(M + dt * K)
    inv_m = sp.diags(1.0 / mt)
    c = 1.0 / (dt * tau**2)
    core = inv_m @ Qs @ inv_m
    F_inv = symmetrize(c * (G.T @ core @ G))
    F_inv_A = as_csc(c * (G.T @ core @ M))
    At_F_inv_A = symmetrize(c * (M.T @ core @ M))
    R = as_csc(sqrt(c) * (G.T @ inv_m @ Ls))
    AtR = as_csc(sqrt(c) * (M.T @ inv_m @ Ls))
    return TransitionBlock(dt, G, M, F_inv, F_inv_A, At_F_inv_A, R, AtR)


def _assemble_joint(N, Q1, S1, blocks):
    nt = len(blocks) + 1
    P = [[None] * nt for _ in range(nt)]
    for i in range(nt):
        P[i][i] = sp.csc_matrix((N, N))
    P[0][0] = P[0][0] + Q1
    for i, b in enumerate(blocks):
        P[i][i] = P[i][i] + b.At_F_inv_A
        P[i + 1][i + 1] = P[i + 1][i + 1] + b.F_inv
        P[i][i + 1] = -b.F_inv_A.T
        P[i + 1][i] = -b.F_inv_A
    Q = symmetrize(sp.bmat(P, format="csc"))
    cols = [sp.vstack([S1, sp.csc_matrix(((nt - 1) * N, S1.shape[1]))])]
    for i, b in enumerate(blocks):
        m = b.F_inv_sqrt.shape[1]
        col = [sp.csc_matrix((N, m))] * nt
        col = list(col)
        col[i] = b.At_F_inv_sqrt
        col[i + 1] = -b.F_inv_sqrt
        cols.append(sp.vstack(col))
    S = as_csc(sp.hstack(cols))
    return Q, S


def spatiotemporal_prior(space, spec, cs=None, lumping="auto"):
    """Implicit-Euler state-space prior and its flattened (time-major) GMRF.

    Per step ``G = M + dt K``, ``A = G^{-1} M`` and
    ``F^{-1} = (1 / (dt tau^2)) G^T M~^{-1} Q_s M~^{-1} G`` with ``Q_s`` the
    spatial-noise precision; every block of the joint precision is a sparse
    product of ``G``, ``M``, ``M~`` and ``Q_s``.
    """
    N = space.n_dofs
    cs = ConstraintSet.empty(N) if cs is None else cs
    M = assemble_mass(space)
    K = assemble_stiffness(space, spec.spatial_op)
    K, M = apply_constraints(K, M, cs, "precision_pair")
    mt = _lumped(M, lumping)
    Qs, Ls = _matern_deviation(space, spec.noise_spec, cs, lumping, True)
    Q1, S1 = _matern_deviation(space, spec.initial_spec, cs, lumping, True)

    cache = {}
    blocks = []
    for dt in np.diff(spec.t_grid):
        key = round(float(dt), 14)
        if key not in cache:
            cache[key] = _step_blocks(float(dt), K, M, mt, Qs, Ls, spec.tau)
        blocks.append(cache[key])
    Q, S = _assemble_joint(N, Q1, S1, blocks)

    joint_cs = _tile_constraints(cs, spec.n_t)
    Q, S = _decouple(Q, S, joint_cs)
    Q, S = _to_actual(Q, S, joint_cs)
    prior = SpatiotemporalPrior(N, spec.t_grid, blocks, Q1, Q, S, cs)
    return prior, GMRF(np.zeros(Q.shape[0]), Q, sqrt=S, check=False)


def _tile_constraints(cs, n_t):
    N = cs.n_dofs
    out = []
    for i in range(n_t):
        off = i * N
        for c in cs.constraints:
            out.append(Constraint(c.dof + off, tuple(m + off for m in c.masters), c.coeffs, c.eps2))
    return ConstraintSet(N * n_t, tuple(out))


def final_time_std(space, spec, cs=None):
    _, g = spatiotemporal_prior(space, spec, cs)
    N = space.n_dofs
    var = selected_inverse_diagonal(g.factor)[-N:]
    free = np.ones(N, dtype=bool)
    if cs is not None and len(cs):
        free[cs.constrained] = False
    return float(np.sqrt(np.mean(var[free])))


def calibrate_tau(space, spec, cs=None, target_std=1.0, iterations=3):
    """Rescale the forcing ``tau`` so the mean final-time marginal std is ``target_std``."""
    tau = spec.tau
    for _ in range(iterations):
        s = final_time_std(space, _with_tau(spec, tau), cs)
        tau *= target_std / s
    return tau


def _with_tau(spec, tau):
    return SpatiotemporalSpec(spec.t_grid, spec.spatial_op, spec.noise_spec, tau, spec.initial_spec)
