"""Gauss-Newton mode finding and the Laplace posterior."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import ContractError, ConvergenceError, StagnationError
from ..gmrf import GMRF, noise_sqrt
from ..sparse.cg import CGConfig, cg_solve
from ..sparse.cholesky import analyze, factorize
from ..sparse.csc import as_csc, pattern_of, symmetrize


ROUNDOFF_DECREASE = 1e-8
ROUNDOFF_FACTOR = 64.0


@dataclass(frozen=True)
class LineSearch:
    c_armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 30

    def __post_init__(self):
        if not 0 < self.c_armijo < 1:
            raise ContractError("c_armijo must lie in (0, 1)")
        if not 0 < self.shrink < 1:
            raise ContractError("shrink must lie in (0, 1)")
        if self.max_backtracks < 0:
            raise ContractError("max_backtracks must be non-negative")


@dataclass(frozen=True)
class GaussNewtonConfig:
    max_iters: int = 10
    decrement_tol: float = 1e-5
    line_search: LineSearch = field(default_factory=LineSearch)
    linear_solver: str = "cholesky"
    cg: CGConfig = field(default_factory=CGConfig)

    def __post_init__(self):
        if self.max_iters < 1:
            raise ContractError("max_iters must be at least 1")
        if not self.decrement_tol > 0:
            raise ContractError("decrement_tol must be positive")
        if self.linear_solver not in ("cholesky", "cg"):
            raise ContractError(f"unknown linear solver {self.linear_solver!r}")


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    decrement: float
    step: float
    backtracks: int
    gradient_norm: float


@dataclass
class GaussNewtonResult:
    x: np.ndarray
    trace: list
    converged: bool
    symbolic: object = None

    @property
    def iterations(self):
        """Number of steps taken."""
        return sum(1 for r in self.trace if r.step > 0)

    @property
    def decrement(self):
        return self.trace[-1].decrement if self.trace else float("nan")


def objective(prior, residual, x):
    """``-log p(x | y)`` up to a constant."""
    dx = x - prior.mean
    r = residual.misfit(x)
    return 0.5 * dx @ (prior.precision @ dx) + 0.5 * r @ (residual.noise_precision @ r)


def objective_roundoff(prior, residual, x):
    """Rough floating-point error of :func:`objective` at ``x``.

    Built from absolute values so that cancellation between large terms is
    accounted for; used to tell a real line-search failure from round-off.
    """
    dx = np.abs(x - prior.mean)
    r = np.abs(residual.misfit(x))
    mag = 0.5 * dx @ (abs(prior.precision) @ dx) + 0.5 * r @ (abs(residual.noise_precision) @ r)
    return ROUNDOFF_FACTOR * np.finfo(float).eps * float(mag)


def gradient(prior, residual, x, J=None):
    """``Q (x - mu) - J^T Q_e (y - f(x))``."""
    J = residual.jacobian(x) if J is None else J
    return prior.precision @ (x - prior.mean) - J.T @ (residual.noise_precision @ residual.misfit(x))


def gauss_newton_matrix(prior, residual, J):
    return symmetrize(prior.precision + J.T @ residual.noise_precision @ J)


def hessian_pattern(prior, residual):
    P = pattern_of(residual.pattern)
    return pattern_of(pattern_of(prior.precision) + P.T @ pattern_of(residual.noise_precision) @ P)


def gauss_newton(prior, residual, x0=None, cfg=GaussNewtonConfig(), symbolic=None):
    """Minimize ``-log p(x | y)`` by Gauss-Newton with Armijo backtracking.

    Terminates when the Newton decrement ``sqrt(d^T H d)`` falls below
    ``cfg.decrement_tol`` or after ``cfg.max_iters`` steps.  The symbolic
    Cholesky analysis of ``H`` is computed once and reused.
    """
    n = prior.n
    if residual.n_state != n:
        raise ContractError(f"residual acts on {residual.n_state} values, prior has {n}")
    x = prior.mean.copy() if x0 is None else np.array(x0, dtype=float)
    if x.shape != (n,):
        raise ContractError("x0 has the wrong length")
    ls = cfg.line_search
    if cfg.linear_solver == "cholesky" and symbolic is None:
        symbolic = analyze(hessian_pattern(prior, residual))
    trace = []
    d_prev = None
    phi = objective(prior, residual, x)
    converged = False
    for k in range(cfg.max_iters + 1):
        J = residual.jacobian(x)
        g = gradient(prior, residual, x, J)
        H = gauss_newton_matrix(prior, residual, J)
        if cfg.linear_solver == "cholesky":
            d = -factorize(H, symbolic).solve(g)
        else:
            res = cg_solve(H, -g, x0=d_prev, cfg=cfg.cg)
            if not res.converged:
                raise ConvergenceError(f"CG did not converge in Gauss-Newton iteration {k}")
            d = res.x
        slope = float(g @ d)
        decrement = float(np.sqrt(max(-slope, 0.0)))
        gnorm = float(np.linalg.norm(g))
        if decrement < cfg.decrement_tol:
            trace.append(IterationRecord(k, phi, decrement, 0.0, 0, gnorm))
            converged = True
            break
        if k == cfg.max_iters:
            trace.append(IterationRecord(k, phi, decrement, 0.0, 0, gnorm))
            break
        step = 1.0
        slack = 64 * np.finfo(float).eps * (1.0 + abs(phi))
        for nb in range(ls.max_backtracks + 1):
            x_new = x + step * d
            phi_new = objective(prior, residual, x_new)
            if np.isfinite(phi_new) and phi_new <= phi + ls.c_armijo * step * slope + slack:
                break
            step *= ls.shrink
        else:
            trace.append(IterationRecord(k, phi, decrement, 0.0, ls.max_backtracks, gnorm))
            noise = max(ROUNDOFF_DECREASE * (1.0 + abs(phi)), objective_roundoff(prior, residual, x))
            if -slope <= noise:
                # predicted decrease is below what the objective can resolve
                break
            raise StagnationError(
                f"line search failed after {ls.max_backtracks} backtracks in iteration {k}", trace)
        trace.append(IterationRecord(k, phi, decrement, step, nb, gnorm))
        x, phi, d_prev = x_new, phi_new, d
    return GaussNewtonResult(x, trace, converged, symbolic)


def laplace_posterior(prior, residual, mode, symbolic=None):
    """Gaussian at ``mode`` with precision ``Q + J^T Q_e J`` evaluated at the mode."""
    mode = np.asarray(mode, dtype=float)
    J = residual.jacobian(mode)
    H = gauss_newton_matrix(prior, residual, J)
    if symbolic is None:
        symbolic = analyze(hessian_pattern(prior, residual))
    sqrt = None
    if prior.sqrt is not None:
        sqrt = as_csc(sp.hstack([prior.sqrt, J.T @ noise_sqrt(residual.noise_precision)]))
    return GMRF(mode, H, sqrt=sqrt, factor=factorize(H, symbolic), check=False)
