"""Experiment pipelines: prior construction, conditioning, Gauss-Newton, metrics and artifacts."""
from __future__ import annotations

import contextlib
import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..errors import SpecError, StageError
from ..fem.assembly import DifferentialOperatorSpec, assemble_load, assemble_stiffness
from ..fem.constraints import ConstraintSet
from ..fem.mesh import build_interval_mesh, build_unit_square_mesh
from ..fem.space import build_space, eval_basis
from ..gmrf import (
    AffineObservation,
    condition_affine,
    noise_precision_matrix,
    rbmc_variance,
    sample_direct,
    variance_takahashi,
)
from ..priors import (
    MaternSpec,
    SpatiotemporalSpec,
    calibrate_tau,
    embed_boundary,
    inflate_domain_1d_2d,
    linear_proxy_operator,
    matern_prior,
    spatiotemporal_prior,
)
from ..solver import (
    GaussNewtonConfig,
    burgers_residual,
    collocation_operator,
    fem_observation_operator,
    gauss_newton,
    laplace_posterior,
    lift_to_slice,
    nonlinear_elliptic_residual,
    point_observation_operator,
)
from .config import ProblemSpec
from .problems import (
    collocation_points,
    darcy_operator,
    fem_baseline_solve,
    poisson_manufactured,
    random_initial_condition,
    space_time_collocation,
)
from .reference import (
    burgers_method_of_lines,
    manufactured_elliptic,
    reference_cole_hopf,
    relative_l2_error,
)

PHASES = ("prior", "conditioning", "variance", "sampling")
BURGERS_BOUNDS = (-1.0, 1.0)


@dataclass
class LevelResult:
    resolution: int
    n_dofs: int
    relative_error: float
    iterations: int
    decrement: float
    converged: bool
    timings: dict
    baseline_time: float = None
    baseline_agreement: float = None


@dataclass
class ResultRecord:
    """Summary of one experiment; the top-level numbers are those of the finest level."""

    kind: str
    prior: str
    seed: int
    relative_error: float
    n_dofs: int
    iterations: int
    decrement: float
    timings: dict
    levels: list = field(default_factory=list)
    files: dict = field(default_factory=dict)

    def to_dict(self):
        return _jsonable(asdict(self))

    def numeric_fields(self):
        """Deterministic numbers (everything except wall-clock timings)."""
        out = {"relative_error": self.relative_error, "n_dofs": self.n_dofs,
               "iterations": self.iterations, "decrement": self.decrement}
        for i, lv in enumerate(self.levels):
            for key in ("n_dofs", "relative_error", "iterations", "decrement", "baseline_agreement"):
                out[f"level{i}.{key}"] = getattr(lv, key)
        return out


@dataclass
class Outcome:
    """Arrays of one level kept for the CSV dumps and the report figures."""

    level: LevelResult
    coords: np.ndarray  # (n, d) coordinates of the dumped values
    columns: tuple  # coordinate column names
    mean: np.ndarray
    std: np.ndarray
    trace: list = field(default_factory=list)
    grid: dict = field(default_factory=dict)
    samples: np.ndarray = None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@contextlib.contextmanager
def _stage(name, timings=None):
    """Time a pipeline phase and attribute any failure to it."""
    t0 = time.perf_counter()
    try:
        yield
    except (SpecError, StageError):
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage attached
        raise StageError(name, exc) from exc
    finally:
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


def _new_timings():
    return {p: 0.0 for p in PHASES}


# --------------------------------------------------------------------------
# shared pieces
# --------------------------------------------------------------------------

@dataclass
class _Domain:
    space: object
    cs: ConstraintSet
    keep: np.ndarray  # DoFs inside the original domain
    boundary: np.ndarray  # original-boundary DoFs observed explicitly (inflated case)
    cells: np.ndarray  # elements inside the original domain


def _build_domain(spec, n):
    m = spec.mesh
    if m.boundary == "embedded":
        mesh = build_interval_mesh(n) if m.dim == 1 else build_unit_square_mesh(n)
        space = build_space(mesh, m.order)
        cs = embed_boundary(space, "dirichlet")
        return _Domain(space, cs, np.arange(space.n_dofs), np.array([], dtype=int),
                       np.arange(mesh.n_elements))
    inf = inflate_domain_1d_2d(m.dim, n, m.order, m.inflation_width, m.inflation_growth)
    space = inf.space
    X = space.dof_coords[inf.interior_dofs]
    on_edge = np.any((np.abs(X) <= 1e-10) | (np.abs(X - 1.0) <= 1e-10), axis=1)
    c = space.mesh.centroids()
    cells = np.flatnonzero(np.all((c > 0.0) & (c < 1.0), axis=1))
    return _Domain(space, ConstraintSet.empty(space.n_dofs), inf.interior_dofs,
                   inf.interior_dofs[on_edge], cells)


def _linear_observation(spec, dom, op, f):
    """Affine observation of a linear PDE for the chosen scheme, plus boundary data."""
    obs = spec.observations
    space = dom.space
    if obs.scheme == "collocation":
        pts = collocation_points(obs.collocation_count, [(0.0, 1.0)] * space.dim, obs.placement,
                                 spec.problem.seed)
        info = collocation_operator(space, op, pts, f(pts), obs.noise_precision)
        A, y, Qe = info.A, info.b, info.noise_precision
    elif spec.mesh.boundary == "embedded":
        info = fem_observation_operator(space, op, obs.noise_precision, dom.cs)
        A, y, Qe = info.A, info.b, info.noise_precision
    else:
        inner = np.setdiff1d(dom.keep, dom.boundary)
        A = assemble_stiffness(space, op)[inner]
        y = assemble_load(space, op.rhs)[inner]
        Qe = noise_precision_matrix(obs.noise_precision, inner.size)
    if dom.boundary.size:
        B = sp.csc_matrix((np.ones(dom.boundary.size), (np.arange(dom.boundary.size), dom.boundary)),
                          shape=(dom.boundary.size, space.n_dofs))
        A = sp.vstack([A, B])
        y = np.concatenate([y, np.zeros(dom.boundary.size)])
        Qe = sp.block_diag([Qe, noise_precision_matrix(obs.boundary_precision, dom.boundary.size)])
    return AffineObservation(sp.csc_matrix(A), y, sp.csc_matrix(Qe))


def _matern_spec(spec, dim):
    p = spec.prior
    if p.kind != "matern":
        raise SpecError(f"prior.kind = {p.kind} needs a time-dependent problem; use matern here")
    return MaternSpec.from_range(p.range, p.alpha, dim, variance=p.variance)


def _variance(spec, post, timings):
    method = spec.variance.method
    with _stage("variance", timings):
        if method == "none":
            return np.full(post.n, np.nan)
        if method == "takahashi":
            var = variance_takahashi(post)
        else:
            var = rbmc_variance(post, spec.variance.rbmc_samples, rng_seed=spec.problem.seed)
    return np.sqrt(np.maximum(var, 0.0))


def _samples(spec, post, timings):
    k = spec.variance.samples
    if k == 0:
        return None
    with _stage("sampling", timings):
        z = np.random.default_rng(spec.problem.seed + 1).standard_normal((post.n, k))
        out = sample_direct(post, z)
    timings["sampling"] /= k
    return out


def _gn_config(spec):
    g = spec.gauss_newton
    return GaussNewtonConfig(max_iters=g.max_iters, decrement_tol=g.decrement_tol,
                             linear_solver=g.linear_solver)


# --------------------------------------------------------------------------
# pipelines
# --------------------------------------------------------------------------

def _run_linear(spec, n, kind):
    timings = _new_timings()
    with _stage("setup"):
        dom = _build_domain(spec, n)
        space = dom.space
        if kind == "poisson":
            u_true, f = poisson_manufactured(spec.mesh.dim)
            op = DifferentialOperatorSpec(diffusion=1.0, rhs=f)
        else:
            if spec.mesh.dim != 2:
                raise SpecError("darcy is a two-dimensional problem (mesh.dim = 2)")
            op = darcy_operator(space.mesh, spec.darcy, spec.problem.seed, n)
            forcing = float(spec.darcy.forcing)
            u_true, f = None, (lambda x: np.full(len(x), forcing))
    with _stage("prior", timings):
        prior = matern_prior(space, _matern_spec(spec, space.dim), dom.cs, with_sqrt=spec.variance.samples > 0)
    with _stage("conditioning", timings):
        obs = _linear_observation(spec, dom, op, f)
        post = condition_affine(prior, obs)
    std = _variance(spec, post, timings)
    samples = _samples(spec, post, timings)

    with _stage("baseline"):
        t0 = time.perf_counter()
        if spec.mesh.boundary == "embedded":
            bspace, bcs, bop = space, dom.cs, op
        else:
            mesh = build_interval_mesh(n) if spec.mesh.dim == 1 else build_unit_square_mesh(n)
            bspace = build_space(mesh, spec.mesh.order)
            bcs = embed_boundary(bspace, "dirichlet")
            bop = op if kind == "poisson" else darcy_operator(mesh, spec.darcy, spec.problem.seed, n)
        u_fem = fem_baseline_solve(bspace, bop, bcs)
        base_time = time.perf_counter() - t0
        ref = eval_basis(bspace, space.dof_coords[dom.keep]) @ u_fem
        agreement = float(np.linalg.norm(post.mean[dom.keep] - ref) / np.linalg.norm(ref))

    with _stage("metrics"):
        if u_true is not None:
            err = relative_l2_error(post.mean, u_true, space, cells=dom.cells)
        else:
            err = 100.0 * agreement
    level = LevelResult(n, space.n_dofs, float(err), 0, float("nan"), True, timings,
                        base_time, agreement)
    keep = dom.keep
    cols = ("x",) if space.dim == 1 else ("x", "y")
    grid = {"space": space, "mean_dofs": post.mean, "std_dofs": std, "truth": u_true, "keep": keep}
    return Outcome(level, space.dof_coords[keep], cols, post.mean[keep], std[keep], [], grid,
                   None if samples is None else samples[keep])


def _run_elliptic(spec, n):
    timings = _new_timings()
    with _stage("setup"):
        if spec.mesh.dim != 2:
            raise SpecError("nonlinear_elliptic is a two-dimensional problem (mesh.dim = 2)")
        if spec.mesh.boundary != "embedded":
            raise SpecError("nonlinear_elliptic supports mesh.boundary = embedded only")
        dom = _build_domain(spec, n)
        space = dom.space
        u_true, f = manufactured_elliptic(spec.elliptic.k_max)
    with _stage("prior", timings):
        prior = matern_prior(space, _matern_spec(spec, 2), dom.cs, with_sqrt=spec.variance.samples > 0)
    with _stage("conditioning", timings):
        res = nonlinear_elliptic_residual(space, f, dom.cs, spec.elliptic.cubic,
                                          spec.observations.noise_precision)
        gn = gauss_newton(prior, res, prior.mean, _gn_config(spec))
        post = laplace_posterior(prior, res, gn.x, gn.symbolic)
    std = _variance(spec, post, timings)
    samples = _samples(spec, post, timings)
    with _stage("metrics"):
        err = relative_l2_error(gn.x, u_true, space)
    level = LevelResult(n, space.n_dofs, float(err), gn.iterations, float(gn.decrement),
                        bool(gn.converged), timings)
    grid = {"space": space, "mean_dofs": gn.x, "std_dofs": std, "truth": u_true,
            "keep": np.arange(space.n_dofs)}
    return Outcome(level, space.dof_coords, ("x", "y"), gn.x, std, gn.trace, grid, samples)


def burgers_time_grid(t_final, dt):
    """``ceil(T / dt) + 1`` equispaced time points on [0, T]."""
    n_t = int(math.ceil(t_final / dt - 1e-9)) + 1
    return np.linspace(0.0, t_final, n_t)


def _burgers_prior_op(spec):
    p = spec.prior
    if p.kind == "advection_diffusion":
        nu = spec.burgers.nu if p.diffusion < 0 else p.diffusion
        return linear_proxy_operator(c=(p.advection,), nu=nu)
    if p.kind == "product_matern_like":
        # no spatial coupling in the drift: an OU process in time per location
        return DifferentialOperatorSpec(reaction=1.0 / p.temporal_range)
    raise SpecError("Burgers problems need prior.kind = advection_diffusion or product_matern_like")


def _run_burgers(spec, n, kind):
    timings = _new_timings()
    b, p, obs = spec.burgers, spec.prior, spec.observations
    with _stage("setup"):
        if spec.mesh.dim != 1:
            raise SpecError("Burgers problems are one-dimensional (mesh.dim = 1)")
        if spec.mesh.boundary != "embedded":
            raise SpecError("Burgers problems support mesh.boundary = embedded only")
        if obs.scheme == "collocation" and spec.mesh.order < 2:
            raise SpecError("collocation of the viscous term needs mesh.order = 2")
        lo, hi = BURGERS_BOUNDS
        space = build_space(build_interval_mesh(n, lo, hi), spec.mesh.order)
        cs = embed_boundary(space, "dirichlet")
        tg = burgers_time_grid(b.t_final, b.dt)
        n_t, N = tg.size, space.n_dofs
        if kind == "burgers_cole_hopf":
            def u0(x):
                return -np.sin(np.pi * np.asarray(x, dtype=float).reshape(-1))
        else:
            u0 = random_initial_condition(spec.problem.seed)
    with _stage("prior", timings):
        op = _burgers_prior_op(spec)
        noise = MaternSpec.from_range(p.noise_range, p.noise_alpha, 1)
        init = MaternSpec.from_range(p.initial_range, p.initial_alpha, 1, variance=1.0)
        st_spec = SpatiotemporalSpec(tg, op, noise, 1.0, init)
        pilot = build_space(build_interval_mesh(b.calibration_elements, lo, hi), spec.mesh.order)
        tau = calibrate_tau(pilot, st_spec, embed_boundary(pilot, "dirichlet"), target_std=p.variance ** 0.5,
                            iterations=2)
        st_spec = SpatiotemporalSpec(tg, op, noise, tau, init)
        _, prior = spatiotemporal_prior(space, st_spec, cs)
    with _stage("conditioning", timings):
        ic = point_observation_operator(space, space.dof_coords, u0(space.dof_coords[:, 0]),
                                        obs.initial_precision)
        ic_post = condition_affine(prior, lift_to_slice(ic, n_t, N, 0).as_observation())
        if obs.scheme == "fem":
            res = burgers_residual(space, tg, b.nu, b.scheme, "fem", cs=cs,
                                   noise_precision=obs.noise_precision)
        else:
            pts = space_time_collocation(obs.collocation_count, BURGERS_BOUNDS, tg, obs.placement,
                                         spec.problem.seed)
            res = burgers_residual(space, tg, b.nu, b.scheme, "collocation", points=pts,
                                   noise_precision=obs.noise_precision)
        gn = gauss_newton(ic_post, res, ic_post.mean, _gn_config(spec))
        post = laplace_posterior(ic_post, res, gn.x, gn.symbolic)
    std = _variance(spec, post, timings)
    samples = _samples(spec, post, timings)
    with _stage("metrics"):
        xe = np.linspace(lo, hi, spec.output.eval_points)
        if kind == "burgers_cole_hopf":
            truth = reference_cole_hopf(b.nu, xe, tg)
        else:
            truth = burgers_method_of_lines(b.nu, 2001, b.t_final, xe, u0=u0, t_eval=tg)
        B = eval_basis(space, xe)
        U = gn.x.reshape(n_t, N)
        est = B @ U.T
        err = relative_l2_error(est, truth)
        prior_err = relative_l2_error(B @ ic_post.mean.reshape(n_t, N).T, truth)
    level = LevelResult(n, prior.n, float(err), gn.iterations, float(gn.decrement), bool(gn.converged),
                        timings)
    T, X = np.meshgrid(tg, space.dof_coords[:, 0], indexing="ij")
    coords = np.column_stack([T.ravel(), X.ravel()])
    grid = {"x": xe, "t": tg, "estimate": est, "truth": truth, "prior_error": prior_err,
            "std_grid": (B @ std.reshape(n_t, N).T) if np.all(np.isfinite(std)) else None}
    return Outcome(level, coords, ("t", "x"), gn.x, std, gn.trace, grid, samples)


def run_level(spec, n):
    kind = spec.kind
    if kind in ("poisson", "darcy"):
        return _run_linear(spec, n, kind)
    if kind == "nonlinear_elliptic":
        return _run_elliptic(spec, n)
    return _run_burgers(spec, n, kind)


def _warm_up():
    """Compile the numba kernels outside the timed phases."""
    from ..sparse.cholesky import analyze, factorize, selected_inverse_diagonal, solve_triangular

    Q = sp.diags([-1.0, 4.0, -1.0], [-1, 0, 1], shape=(6, 6), format="csc")
    F = factorize(Q, analyze(Q))
    selected_inverse_diagonal(F)
    F.solve(np.ones(6))
    solve_triangular(F, np.ones((6, 2)), "upper")


def execute(spec: ProblemSpec, warmup=False):
    """Run all resolutions; returns the record and the per-level outcomes (finest last)."""
    _warm_up()
    if warmup:
        run_level(spec, int(spec.mesh.resolutions[0]))
    outcomes = [run_level(spec, int(n)) for n in spec.mesh.resolutions]
    last = outcomes[-1].level
    record = ResultRecord(spec.kind, spec.prior.kind, spec.problem.seed, last.relative_error, last.n_dofs,
                          last.iterations, last.decrement, dict(last.timings),
                          [o.level for o in outcomes])
    return record, outcomes


def run_experiment(spec: ProblemSpec, out_dir=None, figures=None, warmup=False):
    """Execute ``spec`` and write ``result.json``, ``solution.csv``, ``trace.csv`` (and figures).

    ``out_dir`` defaults to ``spec.output.directory``; ``figures`` to
    ``spec.output.figures``.
    """
    record, outcomes = execute(spec, warmup)
    out = Path(spec.output.directory if out_dir is None else out_dir)
    write_artifacts(record, outcomes, out, spec.output.figures if figures is None else figures)
    return record


def _fmt(v):
    return f"{v:.9g}"


def write_artifacts(record, outcomes, out, figures=True):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    final = outcomes[-1]
    files = {"solution": "solution.csv", "trace": "trace.csv"}
    with open(out / files["solution"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(final.columns) + ["mean", "std"])
        for c, m, s in zip(final.coords, final.mean, final.std):
            w.writerow([_fmt(v) for v in c] + [_fmt(m), _fmt(s)])
    with open(out / files["trace"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "objective", "decrement", "step", "backtracks", "gradient_norm"])
        for r in final.trace:
            w.writerow([r.iteration, _fmt(r.objective), _fmt(r.decrement), _fmt(r.step), r.backtracks,
                        _fmt(r.gradient_norm)])
    if figures:
        from .. import report

        files.update(report.render(record, outcomes, out))
    files["result"] = "result.json"
    record.files = files
    with open(out / files["result"], "w") as fh:
        json.dump(record.to_dict(), fh, indent=2)
        fh.write("\n")
    return files
