"""Problem data for the benchmark pipelines: manufactured solutions, Darcy coefficients, collocation points."""
from __future__ import annotations

import numpy as np
from scipy.stats import qmc

from ..errors import ContractError, SpecError
from ..fem.assembly import DifferentialOperatorSpec, assemble_load, assemble_stiffness
from ..fem.constraints import apply_constraints
from ..fem.mesh import read_coefficient_grid, sample_cell_field
from ..gmrf import sample_direct
from ..priors import MaternSpec, matern_prior
from ..sparse.cholesky import analyze, factorize
from ..sparse.csc import symmetrize


def poisson_manufactured(dim):
    """``u = prod sin(pi x_d)`` with ``f = -Laplace u = dim pi^2 u`` on the unit cube."""
    if dim not in (1, 2):
        raise ContractError("dimension must be 1 or 2")

    def u_true(x):
        x = np.atleast_2d(x)
        return np.prod(np.sin(np.pi * x[:, :dim]), axis=1)

    def f(x):
        return dim * np.pi**2 * u_true(x)

    return u_true, f


def fem_baseline_solve(space, op, cs, f=None):
    """Direct Cholesky solve of the constrained Galerkin system ``K u = b``.

    Uses the same assembly and constraint code as the GMRF path.  ``f``
    overrides ``op.rhs``.
    """
    rhs = op.rhs if f is None else f
    if rhs is None:
        raise ContractError("a right-hand side is required")
    K = assemble_stiffness(space, op)
    b = assemble_load(space, rhs)
    A, b2 = apply_constraints(K, b, cs, "system")
    # sparse products drop exact zeros unevenly; restore a symmetric pattern
    A = symmetrize(A)
    u = factorize(A, analyze(A)).solve(b2)
    return cs.expansion() @ u if len(cs) else u


def synthetic_darcy_grid(n, seed, field_range=0.2, threshold=0.0, high=12.0, low=3.0):
    """Piecewise-constant coefficient on an ``n x n`` cell grid of the unit square.

    A seeded smooth Matern sample, evaluated at the cell centres, is
    thresholded: ``high`` above ``threshold`` and ``low`` elsewhere.
    """
    from ..fem.mesh import build_unit_square_mesh
    from ..fem.space import build_space, eval_basis

    space = build_space(build_unit_square_mesh(n), 1)
    prior = matern_prior(space, MaternSpec.from_range(field_range, 2, 2, variance=1.0), with_sqrt=False)
    z = np.random.default_rng(seed).standard_normal(space.n_dofs)
    sample = sample_direct(prior, z)
    c = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(c, c)
    vals = eval_basis(space, np.column_stack([X.ravel(), Y.ravel()])) @ sample
    return np.where(vals > threshold, high, low).reshape(n, n)


def darcy_coefficient(mesh, cfg, seed, n_grid):
    """Per-element coefficient from ``cfg.coefficient_file`` or the synthetic generator."""
    if cfg.coefficient_file:
        try:
            grid = read_coefficient_grid(cfg.coefficient_file)
        except (OSError, ValueError, ContractError) as exc:
            raise SpecError(f"darcy.coefficient_file {cfg.coefficient_file!r}: {exc}") from exc
        if not np.all(np.isfinite(grid) & (grid > 0)):
            raise SpecError(f"darcy.coefficient_file {cfg.coefficient_file!r}: values must be positive")
    else:
        grid = synthetic_darcy_grid(n_grid, seed, cfg.field_range, cfg.threshold, cfg.high, cfg.low)
    return sample_cell_field(mesh, grid)


def darcy_operator(mesh, cfg, seed, n_grid):
    a = darcy_coefficient(mesh, cfg, seed, n_grid)
    forcing = float(cfg.forcing)
    return DifferentialOperatorSpec(diffusion=a, rhs=lambda x: np.full(len(x), forcing))


def random_initial_condition(seed, n_modes=8, decay=2.0):
    """Smooth seeded initial state on [-1, 1] vanishing at both ends."""
    rng = np.random.default_rng(seed)
    k = np.arange(1, n_modes + 1)
    a = rng.standard_normal(n_modes) * k**-decay
    a /= np.abs(a).sum()

    def u0(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return np.sin(0.5 * np.pi * np.outer(x + 1.0, k)) @ a

    return u0


def collocation_points(n, bounds, placement="halton", seed=0):
    """``n`` points in the box ``bounds`` (list of (lo, hi)), strictly inside it.

    ``halton`` skips the origin of the unscrambled sequence; ``random`` draws
    uniform points from the seeded generator.
    """
    bounds = np.asarray(bounds, dtype=float)
    d = bounds.shape[0]
    if n < 1:
        raise ContractError("need at least one collocation point")
    if placement == "halton":
        u = qmc.Halton(d, scramble=False).random(n + 1)[1:]
    elif placement == "random":
        u = np.random.default_rng(seed).uniform(size=(n, d))
    else:
        raise ContractError(f"unknown placement {placement!r}")
    return bounds[:, 0] + u * (bounds[:, 1] - bounds[:, 0])


def space_time_collocation(n, x_bounds, t_grid, placement="halton", seed=0):
    """Space-time points (x, t) for a 1D evolution problem.

    ``lines`` takes ``n`` spatial locations and repeats them at every time
    after the first; the other placements spread ``n`` points over the box.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if placement == "lines":
        xs = collocation_points(n, [x_bounds], "halton", seed)[:, 0]
        return np.array([(x, t) for t in t_grid[1:] for x in xs])
    return collocation_points(n, [x_bounds, (t_grid[0], t_grid[-1])], placement, seed)
