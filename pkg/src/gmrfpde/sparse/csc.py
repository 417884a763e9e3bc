"""Compressed sparse column storage helpers.

Matrices are carried as canonical ``scipy.sparse.csc_matrix`` objects:
``indptr`` is the column pointer, ``indices`` the row indices (strictly
increasing within a column) and ``data`` the values.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import StructuralError


def csc_from_triplets(nrows, ncols, triplets):
    """Build a canonical CSC matrix from ``(row, col, value)`` triplets.

    Duplicate entries are summed.
    """
    nrows, ncols = int(nrows), int(ncols)
    if len(triplets) == 0:
        return sp.csc_matrix((nrows, ncols))
    arr = np.asarray(triplets, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise StructuralError("triplets must be a sequence of (row, col, value)")
    rows = arr[:, 0]
    cols = arr[:, 1]
    if np.any(rows != np.round(rows)) or np.any(cols != np.round(cols)):
        raise StructuralError("triplet indices must be integers")
    return csc_from_arrays(nrows, ncols, rows.astype(np.int64), cols.astype(np.int64), arr[:, 2])


def csc_from_arrays(nrows, ncols, rows, cols, vals):
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if rows.size and (rows.min() < 0 or rows.max() >= nrows):
        raise StructuralError(f"row index out of range for {nrows} rows")
    if cols.size and (cols.min() < 0 or cols.max() >= ncols):
        raise StructuralError(f"column index out of range for {ncols} columns")
    A = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols)).tocsc()
    A.sum_duplicates()
    A.sort_indices()
    return A


def as_csc(A):
    """Return ``A`` as a canonical CSC matrix (sorted, duplicates summed)."""
    A = sp.csc_matrix(A)
    if not A.has_canonical_format:
        A.sum_duplicates()
        A.sort_indices()
    return A


def check_canonical(A):
    """Raise StructuralError unless ``A`` satisfies the CSC invariants."""
    p = A.indptr
    if p[0] != 0 or p[-1] != A.nnz or np.any(np.diff(p) < 0):
        raise StructuralError("column pointer is not a valid CSC pointer")
    for j in range(A.shape[1]):
        r = A.indices[p[j]:p[j + 1]]
        if r.size > 1 and np.any(np.diff(r) <= 0):
            raise StructuralError(f"row indices in column {j} are not strictly increasing")
    return True


def symmetrize(A):
    """Numerically symmetrize as (A + A^T) / 2."""
    return as_csc(0.5 * (A + A.T))


def is_pattern_symmetric(A):
    S = sp.csc_matrix((np.ones(A.nnz), A.indices, A.indptr), shape=A.shape)
    D = (S - S.T)
    D.eliminate_zeros()
    return D.nnz == 0


def diag_matrix(d):
    d = np.asarray(d, dtype=float)
    return sp.diags(d, format="csc")


def block_diag(blocks):
    return as_csc(sp.block_diag(blocks, format="csc"))


def write_coordinate(path, A):
    """Write ``A`` as text: header ``nrows ncols nnz`` then 0-based ``row col value``."""
    A = as_csc(A).tocoo()
    with open(path, "w") as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        order = np.lexsort((A.row, A.col))
        for k in order:
            fh.write(f"{A.row[k]} {A.col[k]} {A.data[k]:.17g}\n")


def read_coordinate(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise StructuralError("coordinate header must be 'nrows ncols nnz'")
        nrows, ncols, nnz = (int(h) for h in header)
        body = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    if body.shape[0] != nnz:
        raise StructuralError(f"expected {nnz} entries, found {body.shape[0]}")
    return csc_from_arrays(nrows, ncols, body[:, 0].astype(np.int64),
                           body[:, 1].astype(np.int64), body[:, 2])


def pattern_of(A):
    """Structural pattern of ``A`` with unit values (explicit zeros included)."""
    A = sp.csc_matrix(A, copy=True)
    A.sum_duplicates()
    A.sort_indices()
    return sp.csc_matrix((np.ones(A.indices.size), A.indices, A.indptr), shape=A.shape)


def project_to_pattern(A, pattern):
    """Store ``A`` on the fixed ``pattern`` (a superset of its nonzeros)."""
    P = as_csc(pattern)
    nrows = P.shape[0]
    cols = np.repeat(np.arange(P.shape[1], dtype=np.int64), np.diff(P.indptr))
    keys = cols * nrows + P.indices
    C = sp.coo_matrix(A)
    if C.shape != P.shape:
        raise StructuralError("matrix and pattern shapes differ")
    ak = C.col.astype(np.int64) * nrows + C.row
    pos = np.searchsorted(keys, ak)
    pos = np.minimum(pos, keys.size - 1) if keys.size else pos
    nz = C.data != 0
    if keys.size == 0:
        if np.any(nz):
            raise StructuralError("matrix has entries outside the pattern")
        return sp.csc_matrix(P.shape)
    if np.any((keys[pos] != ak) & nz):
        raise StructuralError("matrix has entries outside the pattern")
    vals = np.zeros(P.nnz)
    ok = keys[pos] == ak
    np.add.at(vals, pos[ok], C.data[ok])
    return sp.csc_matrix((vals, P.indices.copy(), P.indptr.copy()), shape=P.shape)
