"""Nonlinear residuals with hand-assembled sparse Jacobians."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import ContractError
from ..fem.assembly import (
    DifferentialOperatorSpec,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    lump_mass_auto,
)
from ..fem.quadrature import reference_rule
from ..fem.space import eval_basis, reference_basis
from ..gmrf import HARD_OBSERVATION_PRECISION, noise_precision_matrix
from ..sparse.csc import as_csc, pattern_of, project_to_pattern
from .operators import weak_row_map


class NonlinearResidual:
    """Observation ``y = f(u) + noise`` with noise precision ``Q_e``.

    ``fun(u)`` returns ``f(u)``; ``jac(u)`` its sparse Jacobian.  Jacobians are
    stored on the fixed ``pattern`` so symbolic analyses can be reused.
    """

    def __init__(self, fun, jac, n_state, pattern, noise_precision=HARD_OBSERVATION_PRECISION, y=None):
        self._fun = fun
        self._jac = jac
        self.pattern = pattern_of(pattern)
        m = self.pattern.shape[0]
        if self.pattern.shape[1] != n_state:
            raise ContractError("Jacobian pattern has the wrong number of columns")
        self.n_state = n_state
        self.y = np.zeros(m) if y is None else np.asarray(y, dtype=float).reshape(-1)
        if self.y.shape != (m,):
            raise ContractError("target y has the wrong length")
        self.noise_precision = noise_precision_matrix(noise_precision, m)

    @property
    def n_obs(self):
        return self.pattern.shape[0]

    def eval(self, u):
        return np.asarray(self._fun(np.asarray(u, dtype=float)), dtype=float)

    def jacobian(self, u):
        return project_to_pattern(self._jac(np.asarray(u, dtype=float)), self.pattern)

    def misfit(self, u):
        return self.y - self.eval(u)

    def with_noise(self, noise_precision):
        return NonlinearResidual(self._fun, self._jac, self.n_state, self.pattern, noise_precision, self.y)


def linear_residual(A, b=None, y=None, noise_precision=HARD_OBSERVATION_PRECISION):
    """``f(u) = A u + b``."""
    A = as_csc(A)
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)
    return NonlinearResidual(lambda u: A @ u + b, lambda u: A, A.shape[1], A, noise_precision, y)


def from_information_operator(op):
    """Residual form ``f(u) = A u`` with target ``b``."""
    return linear_residual(op.A, None, op.b, op.noise_precision)


def stack_residuals(residuals):
    n = residuals[0].n_state
    if any(r.n_state != n for r in residuals):
        raise ContractError("stacked residuals must act on the same state")
    pattern = sp.vstack([r.pattern for r in residuals])
    fun = lambda u: np.concatenate([r.eval(u) for r in residuals])
    jac = lambda u: sp.vstack([r.jacobian(u) for r in residuals])
    Q = sp.block_diag([r.noise_precision for r in residuals])
    y = np.concatenate([r.y for r in residuals])
    return NonlinearResidual(fun, jac, n, pattern, Q, y)


# --------------------------------------------------------------------------
# element quadrature for nonlinear terms
# --------------------------------------------------------------------------

class _ElementQuadrature:
    def __init__(self, space, degree):
        pts, w = reference_rule(space.dim, degree)
        phi, dphi, _ = reference_basis(space.dim, space.order, pts)
        _, _, invJ, det = space.geometry()
        self.space = space
        self.phi = phi                                       # (nq, nloc)
        self.grad = np.einsum("ekd,qjk->eqjd", invJ, dphi)   # (E, nq, nloc, dim)
        self.wdet = det[:, None] * w[None, :]                # (E, nq)
        cd = space.cell_dofs
        nloc = cd.shape[1]
        self.rows = np.repeat(cd, nloc, axis=1).ravel()
        self.cols = np.tile(cd, (1, nloc)).ravel()

    def values(self, u):
        ue = u[self.space.cell_dofs]                          # (E, nloc)
        return ue @ self.phi.T, np.einsum("ej,eqjd->eqd", ue, self.grad)

    def vector(self, integrand):
        """``b_a = int phi_a g`` for g given at quadrature points (E, nq)."""
        local = np.einsum("eq,qa->ea", self.wdet * integrand, self.phi)
        out = np.zeros(self.space.n_dofs)
        np.add.at(out, self.space.cell_dofs.ravel(), local.ravel())
        return out

    def matrix(self, local):
        n = self.space.n_dofs
        return as_csc(sp.coo_matrix((local.ravel(), (self.rows, self.cols)), shape=(n, n)))


# --------------------------------------------------------------------------
# Burgers
# --------------------------------------------------------------------------

def _time_steps(t_grid):
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
        raise ContractError("t_grid must be strictly increasing with at least 2 points")
    return t, np.diff(t)


def _theta(scheme):
    if scheme == "implicit_euler":
        return 1.0
    if scheme == "crank_nicolson":
        return 0.5
    raise ContractError(f"unknown time-stepping scheme {scheme!r}")


def burgers_residual(space, t_grid, nu, scheme="implicit_euler", mode="fem", points=None,
                     cs=None, noise_precision=HARD_OBSERVATION_PRECISION):
    """Discretized ``u_t + u u_x - nu u_xx`` on a time-major state (n_t slices).

    ``mode="fem"`` tests each step against the basis (constrained test rows
    dropped); ``mode="collocation"`` evaluates the strong residual at
    space-time ``points`` (x, t), each snapped to the nearest grid time after
    the first.  ``theta = 1`` (implicit Euler) or ``1/2`` (Crank-Nicolson)
    weights the spatial operator between the new and the old slice.
    """
    if space.dim != 1:
        raise ContractError("Burgers residual is one-dimensional")
    if nu < 0:
        raise ContractError("viscosity must be non-negative")
    t, dts = _time_steps(t_grid)
    theta = _theta(scheme)
    n_t, N = t.size, space.n_dofs
    if mode == "fem":
        return _burgers_fem(space, n_t, dts, nu, theta, cs, noise_precision)
    if mode == "collocation":
        if points is None:
            raise ContractError("collocation mode needs space-time points")
        return _burgers_collocation(space, t, nu, theta, points, noise_precision)
    raise ContractError(f"unknown Burgers observation mode {mode!r}")


def _burgers_fem(space, n_t, dts, nu, theta, cs, noise_precision):
    N = space.n_dofs
    R = weak_row_map(cs, N)
    M = assemble_mass(space)
    Kd = assemble_stiffness(space, DifferentialOperatorSpec(diffusion=1.0)) * nu
    quad = _ElementQuadrature(space, 3 * space.order)

    def advection(u):
        v, g = quad.values(u)
        return quad.vector(v * g[..., 0])

    def advection_jac(u):
        v, g = quad.values(u)
        # d/du_j (u u_x) = phi_j u_x + u phi_j'
        dj = quad.phi[None] * g[..., 0][..., None] + v[..., None] * quad.grad[..., 0]
        local = np.einsum("eq,qa,eqj->eaj", quad.wdet, quad.phi, dj)
        return quad.matrix(local)

    def spatial(u):
        return Kd @ u + advection(u)

    def fun(x):
        U = x.reshape(n_t, N)
        S = np.array([spatial(U[i]) for i in range(n_t)])
        out = []
        for i, dt in enumerate(dts):
            r = M @ (U[i + 1] - U[i]) / dt + theta * S[i + 1] + (1 - theta) * S[i]
            out.append(R @ r)
        return np.concatenate(out)

    def jac(x):
        U = x.reshape(n_t, N)
        D = [Kd + advection_jac(U[i]) for i in range(n_t)]
        rows = []
        for i, dt in enumerate(dts):
            row = [None] * n_t
            row[i] = R @ (-M / dt + (1 - theta) * D[i])
            row[i + 1] = R @ (M / dt + theta * D[i + 1])
            rows.append(row)
        return sp.bmat(rows, format="csc")

    local_pattern = pattern_of(R @ (pattern_of(M) + pattern_of(Kd)))
    prow = []
    for i in range(n_t - 1):
        row = [None] * n_t
        row[i] = local_pattern
        row[i + 1] = local_pattern
        prow.append(row)
    pattern = sp.bmat(prow, format="csc")
    return NonlinearResidual(fun, jac, n_t * N, pattern, noise_precision)


def snap_to_slices(t_grid, times):
    """Index of the nearest grid time, never the first slice."""
    t = np.asarray(t_grid, dtype=float)
    idx = np.abs(np.asarray(times, dtype=float)[:, None] - t[None, :]).argmin(axis=1)
    return np.maximum(idx, 1)


def _burgers_collocation(space, t, nu, theta, points, noise_precision):
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n_t, N = t.size, space.n_dofs
    P = pts.shape[0]
    s = snap_to_slices(t, pts[:, 1])
    dt = t[s] - t[s - 1]
    B0 = eval_basis(space, pts[:, :1])
    B1 = eval_basis(space, pts[:, :1], (1,))
    B2 = eval_basis(space, pts[:, :1], (2,))

    def place(B, slices):
        C = sp.coo_matrix(B)
        return as_csc(sp.coo_matrix((C.data, (C.row, slices[C.row] * N + C.col)), shape=(P, n_t * N)))

    cur = [place(B, s) for B in (B0, B1, B2)]
    prev = [place(B, s - 1) for B in (B0, B1, B2)]
    inv_dt = 1.0 / dt

    def spatial(E0, E1, E2, x):
        v, g = E0 @ x, E1 @ x
        return v * g - nu * (E2 @ x)

    def spatial_jac(E0, E1, E2, x):
        v, g = E0 @ x, E1 @ x
        return sp.diags(g) @ E0 + sp.diags(v) @ E1 - nu * E2

    def fun(x):
        r = inv_dt * (cur[0] @ x - prev[0] @ x) + theta * spatial(*cur, x)
        if theta < 1:
            r = r + (1 - theta) * spatial(*prev, x)
        return r

    def jac(x):
        J = sp.diags(inv_dt) @ (cur[0] - prev[0]) + theta * spatial_jac(*cur, x)
        if theta < 1:
            J = J + (1 - theta) * spatial_jac(*prev, x)
        return J

    pattern = sum(pattern_of(E) for E in cur + prev)
    return NonlinearResidual(fun, jac, n_t * N, pattern, noise_precision)


# --------------------------------------------------------------------------
# nonlinear elliptic
# --------------------------------------------------------------------------

def nonlinear_elliptic_residual(space, f, cs=None, cubic="lumped", noise_precision=HARD_OBSERVATION_PRECISION):
    """Weak form of ``-Laplace u + u^3 = f`` (rows of constrained DoFs dropped).

    ``cubic="lumped"`` uses ``M~ u^3`` with the lumped mass; ``"quadrature"``
    integrates ``phi_i (sum_j u_j phi_j)^3`` exactly.  The target is the load
    vector of ``f`` so the residual ``y - f(u)`` vanishes at the solution.
    """
    N = space.n_dofs
    R = weak_row_map(cs, N)
    K = assemble_stiffness(space, DifferentialOperatorSpec(diffusion=1.0))
    load = R @ assemble_load(space, f)
    if cubic == "lumped":
        m = lump_mass_auto(assemble_mass(space)).diagonal()
        fun = lambda u: R @ (K @ u + m * u**3)
        jac = lambda u: R @ (K + sp.diags(3 * m * u**2))
        pattern = R @ (pattern_of(K) + sp.identity(N))
    elif cubic == "quadrature":
        quad = _ElementQuadrature(space, 4 * space.order)

        def fun(u):
            v, _ = quad.values(u)
            return R @ (K @ u + quad.vector(v**3))

        def jac(u):
            v, _ = quad.values(u)
            local = np.einsum("eq,qa,qb->eab", 3 * quad.wdet * v**2, quad.phi, quad.phi)
            return R @ (K + quad.matrix(local))

        pattern = R @ (pattern_of(K) + pattern_of(assemble_mass(space)))
    else:
        raise ContractError(f"unknown cubic treatment {cubic!r}")
    return NonlinearResidual(fun, jac, N, pattern, noise_precision, y=load)
