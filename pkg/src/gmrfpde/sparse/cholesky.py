"""Simplicial sparse Cholesky with a reusable symbolic phase.

The factor satisfies ``P Q P^T = L L^T`` where ``(P Q P^T)[a, b] =
Q[perm[a], perm[b]]``.  The symbolic analysis (ordering, elimination tree,
row patterns of ``L``) depends only on the sparsity pattern and is shared
between numeric factorizations, which is what Gauss-Newton relies on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np
import scipy.sparse as sp

from ..errors import ContractError, NotPositiveDefiniteError, StructuralError
from .csc import as_csc
from .ordering import amd_order, inverse_permutation


# --------------------------------------------------------------------------
# numba kernels
# --------------------------------------------------------------------------

@nb.njit(cache=True)
def _etree(n, Cp, Ci):
    """Elimination tree of an upper-triangular CSC pattern."""
    parent = np.full(n, -1, np.int64)
    ancestor = np.full(n, -1, np.int64)
    for k in range(n):
        for p in range(Cp[k], Cp[k + 1]):
            i = Ci[p]
            while i != -1 and i < k:
                inext = ancestor[i]
                ancestor[i] = k
                if inext == -1:
                    parent[i] = k
                i = inext
    return parent


@nb.njit(cache=True)
def _row_patterns(n, Cp, Ci, parent):
    """Row patterns of L (off-diagonal), each sorted ascending."""
    flag = np.full(n, -1, np.int64)
    counts = np.zeros(n, np.int64)
    stack = np.empty(n, np.int64)
    # first pass: sizes
    rowptr = np.zeros(n + 1, np.int64)
    for k in range(n):
        flag[k] = k
        cnt = 0
        for p in range(Cp[k], Cp[k + 1]):
            i = Ci[p]
            if i > k:
                continue
            while flag[i] != k:
                flag[i] = k
                cnt += 1
                counts[i] += 1
                i = parent[i]
        rowptr[k + 1] = rowptr[k] + cnt
    rowidx = np.empty(rowptr[n], np.int64)
    flag[:] = -1
    for k in range(n):
        flag[k] = k
        top = 0
        for p in range(Cp[k], Cp[k + 1]):
            i = Ci[p]
            if i > k:
                continue
            while flag[i] != k:
                flag[i] = k
                stack[top] = i
                top += 1
                i = parent[i]
        seg = np.sort(stack[:top])
        rowidx[rowptr[k]:rowptr[k + 1]] = seg
    return rowptr, rowidx, counts


@nb.njit(cache=True)
def _numeric(n, Cp, Ci, Cx, rowptr, rowidx, Lp, Li, Lx):
    """Up-looking numeric factorization. Returns -1 on success, else failing pivot."""
    x = np.zeros(n, np.float64)
    nxt = np.empty(n, np.int64)
    mark = np.full(n, -1, np.int64)
    for k in range(n):
        nxt[k] = Lp[k]
    for k in range(n):
        for q in range(rowptr[k], rowptr[k + 1]):
            mark[rowidx[q]] = k
        mark[k] = k
        for p in range(Cp[k], Cp[k + 1]):
            i = Ci[p]
            if i <= k:
                if mark[i] != k:
                    return -(k + 2)  # pattern not covered by the analysis
                x[i] = Cx[p]
        d = x[k]
        x[k] = 0.0
        for q in range(rowptr[k], rowptr[k + 1]):
            i = rowidx[q]
            lki = x[i] / Lx[Lp[i]]
            x[i] = 0.0
            for p in range(Lp[i] + 1, nxt[i]):
                x[Li[p]] -= Lx[p] * lki
            d -= lki * lki
            p = nxt[i]
            nxt[i] += 1
            Li[p] = k
            Lx[p] = lki
        if not d > 0.0:
            Lx[Lp[k]] = d
            return k
        p = nxt[k]
        nxt[k] += 1
        Li[p] = k
        Lx[p] = np.sqrt(d)
    return -1


@nb.njit(cache=True)
def _lsolve(n, Lp, Li, Lx, x):
    for j in range(n):
        x[j] /= Lx[Lp[j]]
        xj = x[j]
        for p in range(Lp[j] + 1, Lp[j + 1]):
            x[Li[p]] -= Lx[p] * xj


@nb.njit(cache=True)
def _ltsolve(n, Lp, Li, Lx, x):
    for j in range(n - 1, -1, -1):
        s = x[j]
        for p in range(Lp[j] + 1, Lp[j + 1]):
            s -= Lx[p] * x[Li[p]]
        x[j] = s / Lx[Lp[j]]


@nb.njit(cache=True)
def _lsolve_multi(n, Lp, Li, Lx, X):
    for c in range(X.shape[1]):
        _lsolve(n, Lp, Li, Lx, X[:, c])


@nb.njit(cache=True)
def _ltsolve_multi(n, Lp, Li, Lx, X):
    for c in range(X.shape[1]):
        _ltsolve(n, Lp, Li, Lx, X[:, c])


@nb.njit(cache=True)
def _takahashi(n, Lp, Li, Lx):
    """Entries of (L L^T)^{-1} on the pattern of L (lower part).

    Column i needs Sigma[k, j] for k, j in its pattern; those sit in columns
    k > i, which are final by then, so each of them is scanned once and
    scattered into a dense accumulator.
    """
    S = np.zeros(Lx.size, np.float64)
    pos = np.full(n, -1, np.int64)
    acc = np.zeros(n, np.float64)
    for i in range(n - 1, -1, -1):
        p0 = Lp[i]
        p1 = Lp[i + 1]
        lii = Lx[p0]
        for pk in range(p0 + 1, p1):
            pos[Li[pk]] = pk
            acc[Li[pk]] = 0.0
        for pk in range(p0 + 1, p1):
            k = Li[pk]
            lki = Lx[pk]
            for q in range(Lp[k], Lp[k + 1]):
                r = Li[q]
                pr = pos[r]
                if pr >= 0:
                    acc[r] += lki * S[q]
                    if r != k:
                        acc[k] += Lx[pr] * S[q]
        diag = 0.0
        for pk in range(p0 + 1, p1):
            v = -acc[Li[pk]] / lii
            S[pk] = v
            diag += Lx[pk] * v
            pos[Li[pk]] = -1
        S[p0] = 1.0 / (lii * lii) - diag / lii
    return S


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SymbolicCholesky:
    """Ordering and nonzero structure of L for one sparsity pattern."""

    n: int
    perm: np.ndarray
    perm_inv: np.ndarray
    parent: np.ndarray
    rowptr: np.ndarray
    rowidx: np.ndarray
    colptr: np.ndarray

    @property
    def nnz(self):
        return int(self.colptr[-1])


@dataclass(frozen=True)
class CholeskyFactor:
    """Numeric factor ``P Q P^T = L L^T``."""

    L: sp.csc_matrix
    perm: np.ndarray
    perm_inv: np.ndarray
    symbolic: SymbolicCholesky

    @property
    def n(self):
        return self.L.shape[0]

    @property
    def nnz(self):
        return self.L.nnz

    def logdet(self):
        return 2.0 * float(np.sum(np.log(self.L.diagonal())))

    def solve(self, b):
        return solve_triangular(self, b, "full")


def _permuted_upper(Q, perm):
    C = Q[perm][:, perm]
    C = sp.triu(C, format="csc")
    C.sort_indices()
    return C


def analyze(Q, perm=None, ordering="amd"):
    """Symbolic phase: choose an ordering and compute the pattern of L."""
    Q = as_csc(Q)
    n = Q.shape[0]
    if Q.shape[1] != n:
        raise StructuralError("Cholesky requires a square matrix")
    if perm is None:
        if ordering == "amd":
            perm = amd_order(Q)
        elif ordering == "natural":
            perm = np.arange(n)
        else:
            raise ContractError(f"unknown ordering {ordering!r}")
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ContractError("perm is not a permutation")
    C = _permuted_upper(Q, perm)
    Cp = C.indptr.astype(np.int64)
    Ci = C.indices.astype(np.int64)
    parent = _etree(n, Cp, Ci)
    rowptr, rowidx, counts = _row_patterns(n, Cp, Ci, parent)
    colptr = np.zeros(n + 1, np.int64)
    colptr[1:] = np.cumsum(counts + 1)
    return SymbolicCholesky(n, perm, inverse_permutation(perm), parent, rowptr, rowidx, colptr)


def factorize(Q, symbolic):
    """Numeric phase on a matrix whose pattern is covered by ``symbolic``."""
    Q = as_csc(Q)
    n = symbolic.n
    if Q.shape != (n, n):
        raise ContractError(f"matrix shape {Q.shape} does not match analysis ({n}, {n})")
    C = _permuted_upper(Q, symbolic.perm)
    Lp = symbolic.colptr
    Li = np.empty(Lp[-1], np.int64)
    Lx = np.empty(Lp[-1], np.float64)
    status = _numeric(n, C.indptr.astype(np.int64), C.indices.astype(np.int64),
                      C.data.astype(np.float64), symbolic.rowptr, symbolic.rowidx, Lp, Li, Lx)
    if status >= 0:
        raise NotPositiveDefiniteError(status, symbolic.perm[status], Lx[Lp[status]])
    if status < -1:
        raise StructuralError("matrix pattern is not covered by the symbolic analysis")
    L = sp.csc_matrix((Lx, Li, Lp), shape=(n, n))
    return CholeskyFactor(L, symbolic.perm, symbolic.perm_inv, symbolic)


def cholesky_factor(Q, perm=None, ordering="amd"):
    """Factor an SPD matrix; ``perm=None`` uses the AMD ordering."""
    return factorize(Q, analyze(Q, perm=perm, ordering=ordering))


def solve_triangular(factor, b, mode="full"):
    """Solve with the factor.

    ``lower`` solves ``L y = b`` and ``upper`` solves ``L^T y = b``, both in the
    permuted coordinates; ``full`` returns ``Q^{-1} b`` in original coordinates.
    ``b`` may be a vector or an ``(n, k)`` array.
    """
    b = np.asarray(b, dtype=np.float64)
    n = factor.n
    if b.shape[0] != n:
        raise ContractError(f"right-hand side has length {b.shape[0]}, expected {n}")
    L = factor.L
    Lp = L.indptr.astype(np.int64)
    Li = L.indices.astype(np.int64)
    Lx = L.data
    multi = b.ndim == 2
    if mode == "full":
        x = np.array(b[factor.perm], dtype=np.float64, order="F")
    else:
        x = np.array(b, dtype=np.float64, order="F")
    if mode in ("lower", "full"):
        (_lsolve_multi if multi else _lsolve)(n, Lp, Li, Lx, x)
    if mode in ("upper", "full"):
        (_ltsolve_multi if multi else _ltsolve)(n, Lp, Li, Lx, x)
    if mode not in ("lower", "upper", "full"):
        raise ContractError(f"unknown solve mode {mode!r}")
    if mode == "full":
        out = np.empty_like(x)
        out[factor.perm] = x
        return out
    return x


def takahashi_selected_inverse(factor):
    """Entries of ``Q^{-1}`` on the pattern of ``L + L^T`` (original ordering)."""
    L = factor.L
    n = factor.n
    S = _takahashi(n, L.indptr.astype(np.int64), L.indices.astype(np.int64), L.data)
    cols = np.repeat(np.arange(n), np.diff(L.indptr))
    rows = L.indices
    r = factor.perm[rows]
    c = factor.perm[cols]
    off = rows != cols
    R = np.concatenate([r, c[off]])
    C = np.concatenate([c, r[off]])
    V = np.concatenate([S, S[off]])
    out = sp.csc_matrix((V, (R, C)), shape=(n, n))
    out.sort_indices()
    return out


def selected_inverse_diagonal(factor):
    L = factor.L
    n = factor.n
    S = _takahashi(n, L.indptr.astype(np.int64), L.indices.astype(np.int64), L.data)
    d = np.empty(n)
    d[factor.perm] = S[L.indptr[:-1]]
    return d
