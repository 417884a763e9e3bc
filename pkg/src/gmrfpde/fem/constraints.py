"""Linear DoF constraints ``u_k = sum_i c_i u_{h(i)}`` (Dirichlet, periodic)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import ContractError
from ..sparse.csc import as_csc

DEFAULT_BOUNDARY_EPS2 = 1e-10


@dataclass(frozen=True)
class Constraint:
    dof: int
    masters: tuple = ()
    coeffs: tuple = ()
    eps2: float = DEFAULT_BOUNDARY_EPS2


@dataclass(frozen=True)
class ConstraintSet:
    n_dofs: int
    constraints: tuple = ()

    def __post_init__(self):
        seen = set()
        for c in self.constraints:
            if not 0 <= c.dof < self.n_dofs:
                raise ContractError(f"constrained DoF {c.dof} out of range")
            if c.dof in seen:
                raise ContractError(f"DoF {c.dof} is constrained twice")
            if len(c.masters) != len(c.coeffs):
                raise ContractError("masters and coefficients differ in length")
            if c.eps2 < 0:
                raise ContractError("constraint noise must be non-negative")
            seen.add(c.dof)
        for c in self.constraints:
            for m in c.masters:
                if not 0 <= m < self.n_dofs:
                    raise ContractError(f"master DoF {m} out of range")
                if m in seen:
                    raise ContractError(
                        f"DoF {m} is both constrained and a master (circular or multi-level constraint)")

    @classmethod
    def empty(cls, n_dofs):
        return cls(n_dofs, ())

    def __len__(self):
        return len(self.constraints)

    @property
    def constrained(self):
        return np.array([c.dof for c in self.constraints], dtype=np.int64)

    @property
    def eps2(self):
        return np.array([c.eps2 for c in self.constraints], dtype=float)

    @property
    def free(self):
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.constrained] = False
        return np.flatnonzero(mask)

    def _coupling(self):
        """Sparse C with C[k, h(i)] = c_i."""
        rows, cols, vals = [], [], []
        for c in self.constraints:
            for m, w in zip(c.masters, c.coeffs):
                rows.append(c.dof)
                cols.append(m)
                vals.append(w)
        return sp.csc_matrix((vals, (rows, cols)), shape=(self.n_dofs, self.n_dofs))

    def expansion(self):
        """E: maps free coordinates to full vectors; column k zero, E[k, h(i)] = c_i."""
        d = np.ones(self.n_dofs)
        d[self.constrained] = 0.0
        return as_csc(sp.diags(d) + self._coupling())

    def transform(self):
        """T = I + C: deviation coordinates -> actual values (u_k = dev_k + sum c_i u_h)."""
        return as_csc(sp.eye(self.n_dofs) + self._coupling())

    def transform_inverse(self):
        """T^{-1} = I - C (exact because masters are never constrained)."""
        return as_csc(sp.eye(self.n_dofs) - self._coupling())


def apply_constraints(A, b, cs, mode="system"):
    """Enforce constraints on a linear system or on a (K, M) precision pair.

    ``mode="system"``: columns ``k`` are folded onto the master columns and
    zeroed, rows likewise (with the right-hand side), and each constrained row
    becomes the unit row with zero right-hand side.  After solving, recover the
    constrained values with ``cs.expansion() @ u``.

    ``mode="precision_pair"``: ``A`` and ``b`` are the stiffness and mass
    matrices; both are transformed as above and ``M_kk`` is set to the
    constraint noise ``eps_k^2``.  Returns ``(K', M')``.
    """
    A = as_csc(A)
    if len(cs) == 0:
        return A, (b if not sp.issparse(b) else as_csc(b))
    if A.shape != (cs.n_dofs, cs.n_dofs):
        raise ContractError("matrix size does not match the constraint set")
    E = cs.expansion()
    k = cs.constrained
    unit = np.zeros(cs.n_dofs)
    unit[k] = 1.0
    A2 = as_csc(E.T @ A @ E + sp.diags(unit))
    A2.eliminate_zeros()
    if mode == "system":
        b2 = E.T @ np.asarray(b, dtype=float)
        b2[k] = 0.0
        return A2, b2
    if mode == "precision_pair":
        M = as_csc(b)
        eps = np.zeros(cs.n_dofs)
        eps[k] = cs.eps2
        M2 = as_csc(E.T @ M @ E + sp.diags(eps))
        M2.eliminate_zeros()
        return A2, M2
    raise ContractError(f"unknown constraint mode {mode!r}")


def dirichlet_constraints(dofs, n_dofs, eps2=DEFAULT_BOUNDARY_EPS2):
    return ConstraintSet(n_dofs, tuple(Constraint(int(k), (), (), eps2) for k in np.unique(dofs)))


def periodic_constraints(pairs, n_dofs, eps2=DEFAULT_BOUNDARY_EPS2):
    """``pairs`` of (constrained, master) DoFs; enforces u_constrained = u_master."""
    return ConstraintSet(n_dofs, tuple(Constraint(int(k), (int(m),), (1.0,), eps2) for k, m in pairs))
