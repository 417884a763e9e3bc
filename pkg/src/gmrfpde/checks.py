"""Quick invariant suite behind ``gmrfpde check``: small seeded instances against dense oracles."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import DifferentialOperatorSpec, build_interval_mesh, build_space, dirichlet_constraints
from .gmrf import GMRF, AffineObservation, condition_affine, variance_takahashi
from .priors import MaternSpec, SpatiotemporalSpec, linear_proxy_operator, spatiotemporal_prior
from .solver import GaussNewtonConfig, burgers_residual, gauss_newton, linear_residual
from .sparse import (
    CGConfig,
    analyze,
    amd_order,
    cg_solve,
    csc_from_triplets,
    factorize,
    takahashi_selected_inverse,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _spd(rng, n, density=0.15):
    A = sp.random(n, n, density, random_state=rng, format="csc")
    return sp.csc_matrix(A @ A.T + sp.identity(n) * (0.5 + n * density))


def check_triplets(rng):
    n = 8
    rows, cols = rng.integers(0, n, 30), rng.integers(0, n, 30)
    vals = rng.standard_normal(30)
    A = csc_from_triplets(n, n, list(zip(rows, cols, vals)))
    D = np.zeros((n, n))
    np.add.at(D, (rows, cols), vals)
    err = np.abs(A.toarray() - D).max()
    return err <= 1e-14, f"max deviation {err:.1e}"


def check_cholesky(rng):
    worst = 0.0
    for _ in range(5):
        Q = _spd(rng, int(rng.integers(5, 40)))
        F = factorize(Q, analyze(Q))
        P = Q[F.perm][:, F.perm].toarray()
        worst = max(worst, np.linalg.norm(F.L @ F.L.T - P) / np.linalg.norm(P))
    return worst <= 1e-10, f"relative reconstruction {worst:.1e}"


def check_ordering(rng):
    n = 8
    I = sp.identity(n)
    T = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n))
    Q = sp.csc_matrix(sp.kron(I, T) + sp.kron(T, I) + sp.identity(n * n))
    nat = factorize(Q, analyze(Q, ordering="natural")).L.nnz
    amd = factorize(Q, analyze(Q, perm=amd_order(Q))).L.nnz
    return amd < nat, f"nnz(L) amd {amd} vs natural {nat}"


def check_takahashi(rng):
    Q = _spd(rng, 30)
    F = factorize(Q, analyze(Q))
    S = takahashi_selected_inverse(F).tocoo()
    D = np.linalg.inv(Q.toarray())
    err = np.abs(S.data - D[S.row, S.col]).max()
    return err <= 1e-10, f"max deviation {err:.1e}"


def check_cg(rng):
    Q = _spd(rng, 40)
    b = rng.standard_normal(40)
    x = factorize(Q, analyze(Q)).solve(b)
    res = cg_solve(Q, b, cfg=CGConfig(rtol=1e-12, max_iter=500))
    err = np.linalg.norm(res.x - x) / np.linalg.norm(x)
    return bool(res.converged and err <= 1e-6), f"relative difference {err:.1e}"


def check_conditioning(rng):
    n, m = 20, 6
    Q = _spd(rng, n)
    mu = rng.standard_normal(n)
    A = sp.csc_matrix(rng.standard_normal((m, n)))
    y = rng.standard_normal(m)
    post = condition_affine(GMRF(mu, Q), AffineObservation(A, y, 4.0))
    S = np.linalg.inv(Q.toarray())
    Ad = A.toarray()
    K = S @ Ad.T @ np.linalg.inv(Ad @ S @ Ad.T + np.eye(m) / 4.0)
    mean = mu + K @ (y - Ad @ mu)
    cov = S - K @ Ad @ S
    e1 = np.linalg.norm(post.mean - mean) / np.linalg.norm(mean)
    e2 = np.abs(variance_takahashi(post) - np.diag(cov)).max() / np.abs(np.diag(cov)).max()
    return max(e1, e2) <= 1e-8, f"mean {e1:.1e}, variance {e2:.1e}"


def check_spacetime_sqrt(rng):
    space = build_space(build_interval_mesh(4), 1)
    spec = SpatiotemporalSpec(np.linspace(0, 1, 4), linear_proxy_operator(nu=0.5),
                              MaternSpec(kappa=2.0, alpha=1), 1.0, MaternSpec(kappa=2.0, alpha=2))
    _, g = spatiotemporal_prior(space, spec)
    S = g.sqrt
    Z = rng.standard_normal((g.n, 20))
    err = np.linalg.norm(S @ (S.T @ Z) - g.precision @ Z) / np.linalg.norm(g.precision @ Z)
    return err <= 1e-8, f"probe residual {err:.1e}"


def check_constraints(rng):
    space = build_space(build_interval_mesh(10), 1)
    from .bench.problems import fem_baseline_solve

    cs = dirichlet_constraints(space.boundary_dofs(), space.n_dofs)
    u = fem_baseline_solve(space, DifferentialOperatorSpec(diffusion=1.0, rhs=lambda x: np.ones(len(x))), cs)
    x = space.dof_coords[:, 0]
    err = np.abs(u - x * (1 - x) / 2).max()
    return err <= 1e-12, f"nodal deviation {err:.1e}"


def check_one_step(rng):
    n = 12
    Q = _spd(rng, n)
    A = sp.csc_matrix(rng.standard_normal((5, n)))
    y = rng.standard_normal(5)
    prior = GMRF(np.zeros(n), Q)
    res = gauss_newton(prior, linear_residual(A, y=y, noise_precision=3.0), cfg=GaussNewtonConfig())
    exact = condition_affine(prior, AffineObservation(A, y, 3.0)).mean
    err = np.linalg.norm(res.x - exact) / np.linalg.norm(exact)
    return bool(res.iterations <= 1 and err <= 1e-10), f"{res.iterations} step(s), deviation {err:.1e}"


def check_jacobian(rng):
    space = build_space(build_interval_mesh(4, -1, 1), 2)
    tg = np.linspace(0, 0.2, 3)
    res = burgers_residual(space, tg, 0.1, "crank_nicolson", "fem")
    x = rng.standard_normal(res.n_state)
    J = res.jacobian(x).toarray()
    h = 1e-6
    fd = np.column_stack([(res.eval(x + h * e) - res.eval(x - h * e)) / (2 * h) for e in np.eye(x.size)])
    err = np.abs(J - fd).max() / np.abs(fd).max()
    return err <= 1e-5, f"relative deviation {err:.1e}"


def check_determinism(rng):
    from .bench import execute, parse_spec

    spec = parse_spec("[problem]\nkind=poisson\n[mesh]\ndim=1\nresolutions=8\n[variance]\nsamples=2\n")
    a, _ = execute(spec)
    b, _ = execute(spec)
    fa, fb = a.numeric_fields(), b.numeric_fields()
    same = fa.keys() == fb.keys() and all(np.array_equal(fa[k], fb[k], equal_nan=True) for k in fa)
    return same, "identical numeric fields" if same else "runs differ"


CHECKS = [
    ("csc triplets sum duplicates", check_triplets),
    ("cholesky reconstruction", check_cholesky),
    ("amd reduces fill on a 2D grid", check_ordering),
    ("takahashi matches dense inverse", check_takahashi),
    ("cg matches cholesky", check_cg),
    ("affine conditioning matches dense", check_conditioning),
    ("space-time square root", check_spacetime_sqrt),
    ("dirichlet poisson solve", check_constraints),
    ("gauss-newton one-step exactness", check_one_step),
    ("burgers jacobian vs finite differences", check_jacobian),
    ("pipeline determinism", check_determinism),
]


def run_checks(seed=0):
    out = []
    for name, fn in CHECKS:
        rng = np.random.default_rng(seed)
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # noqa: BLE001 - a crash is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail))
    return out
