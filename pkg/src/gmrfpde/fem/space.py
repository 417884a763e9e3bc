"""Lagrange finite element spaces of order 1 and 2."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import ContractError
from .mesh import Mesh


# --------------------------------------------------------------------------
# reference basis: values, gradients and Hessians on the reference element
# --------------------------------------------------------------------------

def reference_basis(dim, order, xi):
    """Basis data at reference points ``xi`` of shape (nq, dim).

    Returns ``(phi, dphi, d2phi)`` with shapes (nq, nloc), (nq, nloc, dim) and
    (nq, nloc, dim, dim).  Local ordering: vertices first, then edge midpoints
    (1D: the single midpoint; 2D: edges 01, 12, 20).
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    nq = xi.shape[0]
    if dim == 1:
        s = xi[:, 0]
        if order == 1:
            phi = np.column_stack([1 - s, s])
            dphi = np.tile([-1.0, 1.0], (nq, 1))[:, :, None]
            d2 = np.zeros((nq, 2, 1, 1))
        elif order == 2:
            phi = np.column_stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)])
            dphi = np.column_stack([4 * s - 3, 4 * s - 1, 4 - 8 * s])[:, :, None]
            d2 = np.tile([4.0, 4.0, -8.0], (nq, 1))[:, :, None, None]
        else:
            raise ContractError("only orders 1 and 2 are supported")
        return phi, dphi, d2
    if dim != 2:
        raise ContractError("only 1D and 2D are supported")
    x, y = xi[:, 0], xi[:, 1]
    l0, l1, l2 = 1 - x - y, x, y
    g0, g1, g2 = np.array([-1.0, -1.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])
    if order == 1:
        phi = np.column_stack([l0, l1, l2])
        dphi = np.broadcast_to(np.stack([g0, g1, g2]), (nq, 3, 2)).copy()
        d2 = np.zeros((nq, 3, 2, 2))
        return phi, dphi, d2
    if order != 2:
        raise ContractError("only orders 1 and 2 are supported")
    lam = [l0, l1, l2]
    grads = [g0, g1, g2]
    phi = np.empty((nq, 6))
    dphi = np.empty((nq, 6, 2))
    d2 = np.empty((nq, 6, 2, 2))
    for a in range(3):
        phi[:, a] = lam[a] * (2 * lam[a] - 1)
        dphi[:, a] = (4 * lam[a] - 1)[:, None] * grads[a]
        d2[:, a] = 4 * np.outer(grads[a], grads[a])
    for m, (a, b) in enumerate(((0, 1), (1, 2), (2, 0))):
        phi[:, 3 + m] = 4 * lam[a] * lam[b]
        dphi[:, 3 + m] = 4 * (lam[b][:, None] * grads[a] + lam[a][:, None] * grads[b])
        d2[:, 3 + m] = 4 * (np.outer(grads[a], grads[b]) + np.outer(grads[b], grads[a]))
    return phi, dphi, d2


# --------------------------------------------------------------------------
# FeSpace
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FeSpace:
    mesh: Mesh
    order: int
    cell_dofs: np.ndarray
    dof_coords: np.ndarray

    @property
    def n_dofs(self):
        return self.dof_coords.shape[0]

    @property
    def dim(self):
        return self.mesh.dim

    @property
    def n_local(self):
        return self.cell_dofs.shape[1]

    def geometry(self):
        """Affine maps: origins (E, d), Jacobians (E, d, d), inverses, |det|."""
        X = self.mesh.nodes[self.mesh.elements]
        x0 = X[:, 0]
        J = np.stack([X[:, k] - x0 for k in range(1, self.dim + 1)], axis=-1)
        det = np.linalg.det(J) if self.dim > 1 else J[:, 0, 0]
        invJ = np.linalg.inv(J)
        return x0, J, invJ, np.abs(det)

    def boundary_dofs(self, tags=None):
        """DoFs lying on the named mesh sides (all sides by default)."""
        bounds = self.mesh.bounds
        names = ["left", "right", "bottom", "top"][: 2 * self.dim]
        tags = names if tags is None else list(tags)
        mask = np.zeros(self.n_dofs, dtype=bool)
        for tag in tags:
            if tag not in names:
                raise ContractError(f"unknown boundary tag {tag!r}")
            axis = names.index(tag) // 2
            lo, hi = bounds[axis]
            target = lo if names.index(tag) % 2 == 0 else hi
            tol = 1e-10 * (hi - lo)
            mask |= np.abs(self.dof_coords[:, axis] - target) <= tol
        return np.flatnonzero(mask)

    def interpolate(self, f):
        """Nodal interpolant of a callable ``f(x)`` with x of shape (n, dim)."""
        return np.asarray(f(self.dof_coords), dtype=float).reshape(self.n_dofs)


def build_space(mesh, order=1):
    if order not in (1, 2):
        raise ContractError("Lagrange order must be 1 or 2")
    elems = mesh.elements
    if order == 1:
        return FeSpace(mesh, 1, elems.copy(), mesh.nodes.copy())
    nv = mesh.n_nodes
    if mesh.dim == 1:
        E = elems.shape[0]
        mid = nv + np.arange(E)
        coords = np.vstack([mesh.nodes, 0.5 * (mesh.nodes[elems[:, 0]] + mesh.nodes[elems[:, 1]])])
        return FeSpace(mesh, 2, np.column_stack([elems, mid]), coords)
    local_edges = np.array([[0, 1], [1, 2], [2, 0]])
    edges = elems[:, local_edges]  # (E, 3, 2)
    key = np.sort(edges, axis=2).reshape(-1, 2)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    mid_ids = nv + inv.reshape(-1, 3)
    coords = np.vstack([mesh.nodes, 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])])
    return FeSpace(mesh, 2, np.hstack([elems, mid_ids]), coords)


def _as_multi_index(derivative, dim):
    if derivative is None:
        return (0,) * dim
    if isinstance(derivative, (int, np.integer)):
        if dim != 1:
            raise ContractError("use a multi-index tuple in 2D")
        return (int(derivative),)
    d = tuple(int(v) for v in derivative)
    if len(d) != dim or any(v < 0 for v in d):
        raise ContractError(f"derivative multi-index must have {dim} non-negative entries")
    return d


def eval_basis(space, points, derivative=None):
    """Sparse matrix whose row ``i`` holds ``(d^alpha phi_j)(x_i)`` for all j.

    ``derivative`` is a multi-index of total order at most 2, e.g. ``(1,)`` for
    d/dx in 1D or ``(0, 2)`` for d^2/dy^2 in 2D.
    """
    alpha = _as_multi_index(derivative, space.dim)
    order = sum(alpha)
    if order > 2:
        raise ContractError("derivatives above total order 2 are not supported")
    pts = np.asarray(points, dtype=float)
    if space.dim == 1:
        pts = pts.reshape(-1, 1)
    elem, xi = space.mesh.locate(pts)
    vals = local_basis_values(space, elem, xi, alpha)
    rows = np.repeat(np.arange(pts.shape[0]), space.n_local)
    cols = space.cell_dofs[elem].ravel()
    A = sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(pts.shape[0], space.n_dofs))
    A.sum_duplicates()
    return A.tocsc()


def local_basis_values(space, elem, xi, alpha):
    """Derivative ``alpha`` of each local basis function at (element, xi) pairs."""
    order = sum(alpha)
    phi, dphi, d2 = reference_basis(space.dim, space.order, xi)
    if order == 0:
        return phi
    _, _, invJ, _ = space.geometry()
    iJ = invJ[elem]  # (n, d, d); grad_x = iJ^T grad_xi
    if order == 1:
        g = np.einsum("nkd,njk->njd", iJ, dphi)  # contract over reference axis
        axis = alpha.index(1)
        return g[:, :, axis]
    H = np.einsum("nka,njkl,nlb->njab", iJ, d2, iJ)
    if 2 in alpha:
        a = alpha.index(2)
        return H[:, :, a, a]
    return H[:, :, 0, 1]
