"""Mass, stiffness and load assembly; mass lumping."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import ContractError, LumpingError
from ..sparse.csc import as_csc
from .quadrature import reference_rule
from .space import reference_basis


@dataclass(frozen=True)
class DifferentialOperatorSpec:
    """Linear operator ``-div(a grad u) + c . grad u + kappa2 u`` and its right-hand side.

    ``diffusion`` is a scalar or a per-element array; ``advection`` a constant
    vector; ``rhs`` a callable of coordinates (n, dim) or a per-DoF vector.
    """

    diffusion: object = 0.0
    advection: tuple = ()
    reaction: float = 0.0
    rhs: object = None

    def __post_init__(self):
        diff_zero = np.all(np.asarray(self.diffusion, dtype=float) == 0)
        adv_zero = len(self.advection) == 0 or np.all(np.asarray(self.advection) == 0)
        if diff_zero and adv_zero and self.reaction == 0:
            raise ContractError("differential operator has no nonzero term")

    @property
    def advection_vector(self):
        return np.asarray(self.advection, dtype=float) if len(self.advection) else None


def _quad(space, degree):
    pts, w = reference_rule(space.dim, degree)
    phi, dphi, _ = reference_basis(space.dim, space.order, pts)
    return pts, w, phi, dphi


def _scatter(space, local):
    """Assemble (E, nloc, nloc) element matrices into a CSC matrix."""
    cd = space.cell_dofs
    nloc = cd.shape[1]
    rows = np.repeat(cd, nloc, axis=1).ravel()
    cols = np.tile(cd, (1, nloc)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(space.n_dofs, space.n_dofs))
    return as_csc(A)


def element_mass(space, weights=None, degree=None):
    degree = 2 * space.order if degree is None else degree
    _, w, phi, _ = _quad(space, degree)
    _, _, _, det = space.geometry()
    scale = det if weights is None else det * np.asarray(weights, dtype=float)
    ref = np.einsum("q,qa,qb->ab", w, phi, phi)
    return scale[:, None, None] * ref[None]


def assemble_mass(space, weights=None):
    """Consistent mass matrix ``M_ij = int phi_i phi_j``."""
    return _scatter(space, element_mass(space, weights))


def element_stiffness(space, op):
    degree = 2 * space.order
    _, w, phi, dphi = _quad(space, degree)
    _, _, invJ, det = space.geometry()
    E = space.mesh.n_elements
    nloc = space.n_local
    local = np.zeros((E, nloc, nloc))
    grad = np.einsum("ekd,qjk->eqjd", invJ, dphi)  # (E, nq, nloc, dim)
    a = np.broadcast_to(np.asarray(op.diffusion, dtype=float), (E,))
    if np.any(a != 0):
        local += (a * det)[:, None, None] * np.einsum("q,eqid,eqjd->eij", w, grad, grad)
    c = op.advection_vector
    if c is not None and np.any(c != 0):
        if c.size != space.dim:
            raise ContractError(f"advection vector must have {space.dim} components")
        cgrad = np.einsum("eqjd,d->eqj", grad, c)
        local += det[:, None, None] * np.einsum("q,qi,eqj->eij", w, phi, cgrad)
    if op.reaction != 0:
        ref = np.einsum("q,qa,qb->ab", w, phi, phi)
        local += op.reaction * det[:, None, None] * ref[None]
    return local


def assemble_stiffness(space, op):
    """Weak form ``int a grad phi_i . grad phi_j + phi_i (c . grad phi_j) + kappa2 phi_i phi_j``."""
    return _scatter(space, element_stiffness(space, op))


def assemble_load(space, f, degree=None):
    """Load vector ``b_i = int phi_i f``.

    ``f`` may be a callable of physical coordinates (n, dim), a scalar, or a
    per-DoF vector (then ``b = M f``).
    """
    if f is None:
        return np.zeros(space.n_dofs)
    if not callable(f):
        arr = np.asarray(f, dtype=float)
        if arr.ndim == 0:
            return assemble_mass(space) @ np.full(space.n_dofs, float(arr))
        if arr.shape != (space.n_dofs,):
            raise ContractError("per-DoF rhs has the wrong length")
        return assemble_mass(space) @ arr
    degree = 2 * space.order + 2 if degree is None else degree
    pts, w, phi, _ = _quad(space, degree)
    x0, J, _, det = space.geometry()
    X = x0[:, None, :] + np.einsum("edk,qk->eqd", J, pts)
    fx = np.asarray(f(X.reshape(-1, space.dim)), dtype=float).reshape(X.shape[:2])
    local = det[:, None] * np.einsum("q,qi,eq->ei", w, phi, fx)
    b = np.zeros(space.n_dofs)
    np.add.at(b, space.cell_dofs.ravel(), local.ravel())
    return b


def lump_mass(M, rule="rowsum"):
    """Diagonal lumped mass.

    ``rowsum`` sums each row; it fails with LumpingError when a row sum is not
    positive (relative to the largest, to absorb round-off) (e.g. vertex DoFs of quadratic triangles).  ``diagonal`` scales
    the consistent diagonal to preserve the total mass and is always positive.
    """
    M = as_csc(M)
    if M.shape[0] != M.shape[1]:
        raise ContractError("mass matrix must be square")
    if rule == "rowsum":
        d = np.asarray(M.sum(axis=1)).ravel()
        small = d <= 1e-10 * np.abs(d).max()
        if np.any(small):
            bad = int(np.flatnonzero(small)[0])
            raise LumpingError(f"row-sum lumping gives non-positive entry {d[bad]:.3e} at DoF {bad}")
    elif rule == "diagonal":
        diag = M.diagonal()
        d = diag * (M.sum() / diag.sum())
    else:
        raise ContractError(f"unknown lumping rule {rule!r}")
    return sp.diags(d, format="csc")


def lump_mass_auto(M):
    """Row-sum lumping, falling back to diagonal scaling when row sums are not positive."""
    try:
        return lump_mass(M, "rowsum")
    except LumpingError:
        return lump_mass(M, "diagonal")
