"""Reference solutions: Cole-Hopf Burgers, a method-of-lines oracle, manufactured elliptic data."""
from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp
from scipy.sparse import diags
from scipy.special import roots_hermite

from ..errors import ContractError, ConvergenceError


def _cole_hopf(nu, x, t, n_quadrature):
    z, w = roots_hermite(int(n_quadrature))
    X, T = np.meshgrid(x, t, indexing="ij")
    out = -np.sin(np.pi * X)
    pos = T > 0
    if not np.any(pos):
        return out
    xs, ts = X[pos][:, None], T[pos][:, None]
    y = xs - np.sqrt(4 * nu * ts) * z[None, :]
    # u = -sum w sin(pi y) f(y) / sum w f(y), f(y) = exp(-cos(pi y) / (2 pi nu))
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    logf = logw[None, :] - np.cos(np.pi * y) / (2 * np.pi * nu)
    shift = logf.max(axis=1, keepdims=True)
    f = np.exp(logf - shift)
    out[pos] = -np.sum(np.sin(np.pi * y) * f, axis=1) / np.sum(f, axis=1)
    return out


def reference_cole_hopf(nu, x_grid, t_grid, n_quadrature=200, check=True):
    """Exact solution of ``u_t + u u_x = nu u_xx`` with ``u(x, 0) = -sin(pi x)`` on [-1, 1].

    Returns an array of shape (len(x_grid), len(t_grid)).  With ``check`` the
    quadrature is repeated with twice the nodes and a change above 1e-8
    raises ConvergenceError.
    """
    if not nu > 0:
        raise ContractError("viscosity must be positive")
    x = np.atleast_1d(np.asarray(x_grid, dtype=float))
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(t < 0):
        raise ContractError("times must be non-negative")
    u = _cole_hopf(nu, x, t, n_quadrature)
    if check:
        u2 = _cole_hopf(nu, x, t, 2 * n_quadrature)
        change = np.abs(u2 - u).max()
        if change > 1e-8:
            raise ConvergenceError(
                f"Cole-Hopf quadrature changed by {change:.2e} when doubling to {2 * n_quadrature} nodes")
    return u


def burgers_method_of_lines(nu, n_points, t_final, x_eval=None, rtol=1e-10, atol=1e-12,
                            u0=None, t_eval=None):
    """Second-order finite differences in space, stiff ODE integration in time.

    Conservative flux form ``-(u^2/2)_x`` with central differences on a
    uniform grid of [-1, 1] with homogeneous Dirichlet ends.  Returns the
    interior grid (or the interpolant at ``x_eval``) at ``t_final``.

    ``u0`` is a callable initial condition (default ``-sin(pi x)``).  With
    ``t_eval`` the solution at all those times is returned, shaped
    (n_x, n_t).
    """
    x = np.linspace(-1.0, 1.0, int(n_points))
    h = x[1] - x[0]

    def rhs(_, v):
        u = np.concatenate([[0.0], v, [0.0]])
        flux = 0.5 * u**2
        return -(flux[2:] - flux[:-2]) / (2 * h) + nu * (u[2:] - 2 * u[1:-1] + u[:-2]) / h**2

    n = x.size - 2
    lap = diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n), format="csc") * (nu / h**2)

    def jac(_, v):
        # d/dv of -(u_{i+1}^2 - u_{i-1}^2) / (4h)
        upper = -v[1:] / (2 * h)
        lower = v[:-1] / (2 * h)
        return lap + diags([lower, upper], [-1, 1], shape=(n, n), format="csc")

    init = -np.sin(np.pi * x[1:-1]) if u0 is None else np.asarray(u0(x[1:-1]), dtype=float)
    sol = solve_ivp(rhs, (0.0, t_final), init, method="BDF", rtol=rtol, atol=atol, jac=jac,
                    t_eval=None if t_eval is None else np.asarray(t_eval, dtype=float))
    if not sol.success:
        raise ConvergenceError(f"method-of-lines integration failed: {sol.message}")
    pad = np.zeros((1, sol.y.shape[1]))
    U = np.vstack([pad, sol.y, pad])
    if t_eval is None:
        u = U[:, -1]
        return (x, u) if x_eval is None else np.interp(x_eval, x, u)
    if x_eval is None:
        return x, U
    return np.column_stack([np.interp(x_eval, x, U[:, j]) for j in range(U.shape[1])])


def manufactured_elliptic(k_max=6):
    """``u = sum_{k<=k_max} k^-6 sin(k pi x) sin(k pi y)`` and ``f = -Laplace u + u^3``."""
    if k_max < 1:
        raise ContractError("k_max must be at least 1")
    ks = np.arange(1, int(k_max) + 1, dtype=float)

    def u_true(x):
        x = np.atleast_2d(x)
        S = np.sin(np.pi * np.outer(x[:, 0], ks)) * np.sin(np.pi * np.outer(x[:, 1], ks))
        return S @ ks**-6.0

    def f(x):
        x = np.atleast_2d(x)
        S = np.sin(np.pi * np.outer(x[:, 0], ks)) * np.sin(np.pi * np.outer(x[:, 1], ks))
        lap = S @ (2 * np.pi**2 * ks**-4.0)
        return lap + (S @ ks**-6.0) ** 3

    return u_true, f


def relative_l2_error(estimate, truth, space=None, degree=None, cells=None):
    """``100 * ||estimate - truth|| / ||truth||``.

    Without ``space`` both arguments are values at the same evaluation points.
    With a ``space``, ``estimate`` is a DoF vector, ``truth`` a callable, and
    the norms are integrals by element quadrature, restricted to ``cells``
    (element indices or mask) when given.
    """
    if space is not None:
        return _fem_relative_l2(space, estimate, truth, degree, cells)
    est = np.asarray(estimate, dtype=float).ravel()
    tru = np.asarray(truth, dtype=float).ravel()
    if est.shape != tru.shape:
        raise ContractError("estimate and truth must be evaluated at the same points")
    nt = np.linalg.norm(tru)
    if nt == 0:
        raise ContractError("relative error undefined for a zero truth")
    return 100.0 * np.linalg.norm(est - tru) / nt


def _fem_relative_l2(space, u, truth, degree=None, cells=None):
    from ..fem.quadrature import reference_rule
    from ..fem.space import reference_basis

    u = np.asarray(u, dtype=float)
    if u.shape != (space.n_dofs,):
        raise ContractError("estimate must be a DoF vector of the space")
    degree = 2 * space.order + 4 if degree is None else degree
    xi, w = reference_rule(space.dim, degree)
    phi, _, _ = reference_basis(space.dim, space.order, xi)
    x0, J, _, det = space.geometry()
    sel = slice(None) if cells is None else np.asarray(cells)
    x0, J, det = x0[sel], J[sel], det[sel]
    X = x0[:, None, :] + np.einsum("edk,qk->eqd", J, xi)
    uh = u[space.cell_dofs[sel]] @ phi.T
    ut = np.asarray(truth(X.reshape(-1, space.dim)), dtype=float).reshape(uh.shape)
    wd = det[:, None] * w[None, :]
    nt = np.sqrt(np.sum(wd * ut**2))
    if nt == 0:
        raise ContractError("relative error undefined for a zero truth")
    return 100.0 * np.sqrt(np.sum(wd * (uh - ut) ** 2)) / nt
