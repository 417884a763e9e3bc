"""Preconditioned conjugate gradients for SPD operators."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from ..errors import ContractError, IndefiniteError


@dataclass(frozen=True)
class CGConfig:
    rtol: float = 1e-8
    atol: float = 0.0
    max_iter: int | None = None  # None means 10 * n
    preconditioner: str = "jacobi"

    def __post_init__(self):
        if not self.rtol > 0:
            raise ContractError("rtol must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ContractError("max_iter must be at least 1")
        if self.preconditioner not in ("none", "jacobi"):
            raise ContractError(f"unknown preconditioner {self.preconditioner!r}")


class CGResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool


def cg_solve(apply_Q, b, x0=None, cfg=CGConfig(), diag=None):
    """Solve ``Q x = b``.

    ``apply_Q`` is a sparse matrix or a callable computing ``Q @ v``.  The
    Jacobi preconditioner needs ``diag`` when ``apply_Q`` is a callable.
    Stops when ``||Q x - b|| <= max(rtol * ||b||, atol)``.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    if sp.issparse(apply_Q) or isinstance(apply_Q, np.ndarray):
        mat = apply_Q
        if mat.shape != (n, n):
            raise ContractError(f"operator shape {mat.shape} does not match rhs length {n}")
        if diag is None:
            diag = np.asarray(mat.diagonal()).ravel()
        matvec = lambda v: mat @ v
    else:
        matvec = apply_Q
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (n,):
        raise ContractError("x0 has the wrong length")
    max_iter = 10 * n if cfg.max_iter is None else cfg.max_iter
    if cfg.preconditioner == "jacobi":
        if diag is None:
            raise ContractError("jacobi preconditioner needs the operator diagonal")
        if np.any(diag <= 0):
            raise IndefiniteError("non-positive diagonal entry in SPD operator")
        minv = 1.0 / diag
    else:
        minv = None

    tol = max(cfg.rtol * np.linalg.norm(b), cfg.atol)
    r = b - matvec(x)
    rnorm = np.linalg.norm(r)
    if rnorm <= tol:
        return CGResult(x, 0, rnorm, True)
    z = r * minv if minv is not None else r.copy()
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Ap = matvec(p)
        curv = p @ Ap
        if not curv > 0:
            raise IndefiniteError(f"non-positive curvature {curv:.3e} at iteration {it}")
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        rnorm = np.linalg.norm(r)
        if rnorm <= tol:
            return CGResult(x, it, rnorm, True)
        z = r * minv if minv is not None else r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return CGResult(x, max_iter, rnorm, False)
