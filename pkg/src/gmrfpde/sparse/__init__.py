"""Sparse linear algebra: CSC helpers, AMD ordering, Cholesky, Takahashi, CG."""
from .cg import CGConfig, CGResult, cg_solve
from .cholesky import (
    CholeskyFactor,
    SymbolicCholesky,
    analyze,
    cholesky_factor,
    factorize,
    selected_inverse_diagonal,
    solve_triangular,
    takahashi_selected_inverse,
)
from .csc import (
    as_csc,
    check_canonical,
    csc_from_arrays,
    csc_from_triplets,
    diag_matrix,
    read_coordinate,
    symmetrize,
    write_coordinate,
)
from .ordering import amd_order, inverse_permutation

__all__ = [
    "CGConfig", "CGResult", "cg_solve", "CholeskyFactor", "SymbolicCholesky", "analyze",
    "cholesky_factor", "factorize", "selected_inverse_diagonal", "solve_triangular",
    "takahashi_selected_inverse", "as_csc", "check_canonical", "csc_from_arrays",
    "csc_from_triplets", "diag_matrix", "read_coordinate", "symmetrize", "write_coordinate",
    "amd_order", "inverse_permutation",
]
