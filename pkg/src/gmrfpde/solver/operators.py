"""Linear information operators: collocation, weak-form (FEM) and point observations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import ContractError
from ..fem.assembly import assemble_load, assemble_stiffness
from ..fem.space import eval_basis
from ..gmrf import AffineObservation, noise_precision_matrix
from ..sparse.csc import as_csc


@dataclass
class LinearInformationOperator:
    """Observation ``A u = b`` (the residual ``A u - b`` is observed as zero)."""

    A: sp.csc_matrix
    b: np.ndarray
    noise_precision: sp.csc_matrix

    @property
    def n_obs(self):
        return self.A.shape[0]

    def as_observation(self):
        return AffineObservation(self.A, self.b, self.noise_precision)

    def residual(self, u):
        return self.A @ u - self.b


def differential_rows(space, op, points):
    """Rows of ``-a Laplace u + c . grad u + kappa2 u`` evaluated at ``points``."""
    pts = np.asarray(points, dtype=float).reshape(-1, space.dim)
    a = np.asarray(op.diffusion, dtype=float)
    if a.ndim != 0:
        raise ContractError("collocation needs a scalar diffusion coefficient")
    A = sp.csc_matrix((pts.shape[0], space.n_dofs))
    if a != 0:
        if space.order < 2:
            raise ContractError("second derivatives need at least quadratic elements for collocation")
        for d in range(space.dim):
            alpha = tuple(2 if e == d else 0 for e in range(space.dim))
            A = A - float(a) * eval_basis(space, pts, alpha)
    c = op.advection_vector
    if c is not None:
        if c.size != space.dim:
            raise ContractError(f"advection vector must have {space.dim} components")
        for d in range(space.dim):
            if c[d] != 0:
                alpha = tuple(1 if e == d else 0 for e in range(space.dim))
                A = A + c[d] * eval_basis(space, pts, alpha)
    if op.reaction != 0:
        A = A + op.reaction * eval_basis(space, pts)
    return as_csc(A)


def collocation_operator(space, op, points, f_values, noise_prec):
    """``A_ij = (D phi_j)(x_i)``, ``b_i = f(x_i)``."""
    A = differential_rows(space, op, points)
    b = np.asarray(f_values, dtype=float).reshape(-1)
    if b.shape != (A.shape[0],):
        raise ContractError("f_values must have one entry per collocation point")
    return LinearInformationOperator(A, b, noise_precision_matrix(noise_prec, A.shape[0]))


def weak_row_map(cs, n_dofs):
    """Map combining test functions as ``E^T`` and dropping constrained rows."""
    if cs is None or len(cs) == 0:
        return sp.identity(n_dofs, format="csc")
    E = cs.expansion()
    return as_csc(E.T[cs.free])


def fem_observation_operator(space, op, noise_prec, cs=None):
    """``A_ij = int phi_i D phi_j`` (weak form), ``b_i = int phi_i f``; constrained test rows dropped."""
    R = weak_row_map(cs, space.n_dofs)
    A = as_csc(R @ assemble_stiffness(space, op))
    b = R @ assemble_load(space, op.rhs)
    return LinearInformationOperator(A, b, noise_precision_matrix(noise_prec, A.shape[0]))


def point_observation_operator(space, points, values, noise_prec):
    """Plain regression: ``u(x_i) = y_i``."""
    A = eval_basis(space, points)
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.shape != (A.shape[0],):
        raise ContractError("one value per observation point is required")
    return LinearInformationOperator(A, v, noise_precision_matrix(noise_prec, A.shape[0]))


def lift_to_slice(op, n_t, n_space, index):
    """Apply a spatial operator to time slice ``index`` of a time-major state."""
    if not 0 <= index < n_t:
        raise ContractError("time slice out of range")
    S = sp.csc_matrix((np.ones(n_space), (np.arange(n_space), index * n_space + np.arange(n_space))),
                      shape=(n_space, n_t * n_space))
    return LinearInformationOperator(as_csc(op.A @ S), op.b, op.noise_precision)


def stack_operators(ops):
    A = as_csc(sp.vstack([o.A for o in ops]))
    b = np.concatenate([o.b for o in ops])
    Q = as_csc(sp.block_diag([o.noise_precision for o in ops]))
    return LinearInformationOperator(A, b, Q)
