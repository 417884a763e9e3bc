"""Gaussians in precision form: conditioning, sampling, marginal variances."""
from __future__ import annotations

import threading

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, ConvergenceError
from .sparse.cg import CGConfig, cg_solve
from .sparse.cholesky import (
    analyze,
    factorize,
    selected_inverse_diagonal,
    solve_triangular,
)
from .sparse.csc import as_csc, symmetrize

HARD_OBSERVATION_PRECISION = 1e8


class GMRF:
    """``N(mean, precision^{-1})`` with an optional left square root.

    The Cholesky factor is computed on first use and cached; concurrent first
    use is serialized so the factorization happens once.  Pass ``symbolic`` to
    reuse an existing ordering/pattern analysis.
    """

    def __init__(self, mean, precision, sqrt=None, factor=None, symbolic=None, check=True):
        Q = as_csc(precision)
        n = Q.shape[0]
        if Q.shape != (n, n):
            raise ContractError("precision must be square")
        mean = np.zeros(n) if mean is None else np.asarray(mean, dtype=float).reshape(-1)
        if mean.shape != (n,):
            raise ContractError(f"mean has length {mean.size}, precision has size {n}")
        if check:
            asym = abs(Q - Q.T).max() if Q.nnz else 0.0
            scale = abs(Q).max() if Q.nnz else 1.0
            if asym > 1e-12 * scale:
                raise ContractError(f"precision is not symmetric (max asymmetry {asym:.3e})")
        if sqrt is not None:
            sqrt = as_csc(sqrt)
            if sqrt.shape[0] != n:
                raise ContractError("square root must have as many rows as the precision")
        self._mean = mean
        self._Q = Q
        self._sqrt = sqrt
        self._factor = factor
        self._symbolic = symbolic
        self._lock = threading.Lock()

    mean = property(lambda self: self._mean)
    precision = property(lambda self: self._Q)
    sqrt = property(lambda self: self._sqrt)

    @property
    def n(self):
        return self._mean.size

    @property
    def factor(self):
        if self._factor is None:
            with self._lock:
                if self._factor is None:
                    sym = self._symbolic if self._symbolic is not None else analyze(self._Q)
                    self._factor = factorize(self._Q, sym)
        return self._factor

    def __repr__(self):
        return f"GMRF(n={self.n}, nnz={self._Q.nnz}, sqrt={'yes' if self._sqrt is not None else 'no'})"


def noise_precision_matrix(noise, m):
    """Normalize a scalar, per-row vector, or sparse matrix to an m x m CSC matrix."""
    if sp.issparse(noise):
        Q = as_csc(noise)
        if Q.shape != (m, m):
            raise ContractError(f"noise precision must be {m} x {m}")
        return Q
    d = np.broadcast_to(np.asarray(noise, dtype=float), (m,)).copy()
    if np.any(d <= 0):
        raise ContractError("noise precision must be positive")
    return sp.diags(d, format="csc")


def noise_sqrt(Qe):
    """Left square root ``L_e`` with ``Q_e = L_e L_e^T``; diagonal fast path."""
    Qe = as_csc(Qe)
    off = Qe - sp.diags(Qe.diagonal())
    if off.count_nonzero() == 0:
        d = Qe.diagonal()
        if np.any(d <= 0):
            raise ContractError("noise precision must be positive definite")
        return sp.diags(np.sqrt(d), format="csc")
    return factor_sqrt(GMRF(None, Qe).factor)


def factor_sqrt(factor):
    """``P^T L`` so that ``(P^T L)(P^T L)^T = Q``."""
    return as_csc(factor.L[factor.perm_inv])


class AffineObservation:
    """Likelihood ``y | u ~ N(A u + b, Q_e^{-1})``."""

    def __init__(self, A, y, noise_precision=HARD_OBSERVATION_PRECISION, b=None):
        A = as_csc(A)
        m = A.shape[0]
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.shape != (m,):
            raise ContractError(f"y has length {y.size}, A has {m} rows")
        b = np.zeros(m) if b is None else np.asarray(b, dtype=float).reshape(-1)
        if b.shape != (m,):
            raise ContractError(f"offset has length {b.size}, A has {m} rows")
        self.A = A
        self.y = y
        self.b = b
        self.noise_precision = noise_precision_matrix(noise_precision, m)

    @property
    def n_obs(self):
        return self.A.shape[0]


def posterior_sqrt(prior_sqrt, A, Qe):
    """``[L_Q | A^T L_e]``."""
    if prior_sqrt is None:
        return None
    return as_csc(sp.hstack([prior_sqrt, A.T @ noise_sqrt(Qe)]))


def condition_affine(prior, obs, symbolic=None):
    """Posterior GMRF of ``prior`` given an affine observation."""
    A = obs.A
    if A.shape[1] != prior.n:
        raise ContractError(f"observation acts on {A.shape[1]} values, prior has {prior.n}")
    Qe = obs.noise_precision
    Qpost = symmetrize(prior.precision + A.T @ Qe @ A)
    post = GMRF(None, Qpost, check=False, symbolic=symbolic)
    resid = obs.y - (A @ prior.mean + obs.b)
    mean = prior.mean + post.factor.solve(A.T @ (Qe @ resid))
    return GMRF(mean, Qpost, sqrt=posterior_sqrt(prior.sqrt, A, Qe),
                factor=post.factor, check=False)


def _standard_normal(z, n):
    z = np.asarray(z, dtype=float)
    if z.shape[0] != n:
        raise ContractError(f"z has leading length {z.shape[0]}, expected {n}")
    return z


def sample_direct(g, z):
    """``mu + P^T L^{-T} z``; ``z`` may hold several columns."""
    z = _standard_normal(z, g.n)
    f = g.factor
    y = solve_triangular(f, z, "upper")
    x = np.empty_like(y)
    x[f.perm] = y
    return x + (g.mean[:, None] if z.ndim == 2 else g.mean)


def sample_cg(g, z, cfg=CGConfig()):
    """``mu + Q^{-1} (L_Q z)`` with the solve done by CG."""
    if g.sqrt is None:
        raise ContractError("CG sampling needs a square root of the precision")
    z = np.asarray(z, dtype=float)
    if z.shape != (g.sqrt.shape[1],):
        raise ContractError(f"z must have length {g.sqrt.shape[1]}")
    res = cg_solve(g.precision, g.sqrt @ z, cfg=cfg)
    if not res.converged:
        raise ConvergenceError(
            f"CG sampling stopped after {res.iterations} iterations (residual {res.residual:.3e})")
    return g.mean + res.x


def variance_takahashi(g):
    return selected_inverse_diagonal(g.factor)


def rbmc_variance(g, n_samples, rng_seed=0):
    """Rao-Blackwellized Monte Carlo estimate of ``diag(Q^{-1})``.

    ``Var(u_i) = 1/Q_ii + Var(E[u_i | u_-i])``; the conditional mean
    ``mu_i - (1/Q_ii) sum_{j != i} Q_ij (u_j - mu_j)`` has known expectation
    ``mu_i``, so its variance is estimated by the mean squared deviation.
    """
    if n_samples < 2:
        raise ContractError("rbmc_variance needs at least 2 samples")
    rng = np.random.default_rng(rng_seed)
    Q = g.precision
    d = Q.diagonal()
    off = as_csc(Q - sp.diags(d))
    acc = np.zeros(g.n)
    batch = 256
    done = 0
    while done < n_samples:
        k = min(batch, n_samples - done)
        dev = sample_direct(g, rng.standard_normal((g.n, k))) - g.mean[:, None]
        corr = (off @ dev) / d[:, None]
        acc += np.sum(corr * corr, axis=1)
        done += k
    return 1.0 / d + acc / n_samples


def marginal_std(g, method="takahashi", n_samples=1000, rng_seed=0):
    if method == "takahashi":
        v = variance_takahashi(g)
    elif method == "rbmc":
        v = rbmc_variance(g, n_samples, rng_seed)
    else:
        raise ContractError(f"unknown variance method {method!r}")
    return np.sqrt(np.maximum(v, 0.0))
