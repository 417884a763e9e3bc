import csv
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gmrfpde.bench import (
    PRIOR_KINDS,
    PROBLEM_KINDS,
    burgers_time_grid,
    collocation_points,
    execute,
    load_spec,
    manufactured_elliptic,
    parse_spec,
    random_initial_condition,
    reference_cole_hopf,
    relative_l2_error,
    run_experiment,
    space_time_collocation,
    spec_to_text,
    synthetic_darcy_grid,
)
from gmrfpde.bench import experiments
from gmrfpde.bench.reference import burgers_method_of_lines
from gmrfpde.errors import ContractError, NotPositiveDefiniteError, SpecError, StageError
from gmrfpde.fem import write_coefficient_grid

SPECS = Path(__file__).resolve().parents[1] / "specs"

# explicit central finite differences, 4001 points, dt = 0.2 h^2 / nu (frozen)
FD_BURGERS_HALF = -0.5027893941823763


# -- spec files -------------------------------------------------------------------

def test_minimal_spec_defaults():
    spec = parse_spec("[problem]\nkind = poisson\n")
    assert spec.kind == "poisson" and spec.prior.kind == "matern"
    assert spec.mesh.resolutions == (16,) and spec.observations.noise_precision == 1e8
    assert parse_spec("[problem]\nkind = burgers_li\n").prior.kind == "advection_diffusion"


@pytest.mark.parametrize("text,needle", [
    ("[mesh]\ndim = 2\n", "problem.kind"),
    ("[problem]\nkind = heat\n", "problem.kind"),
    ("[problem]\nkind = poisson\n[solver]\nx = 1\n", "unknown section"),
    ("[problem]\nkind = poisson\n[mesh]\nsize = 3\n", "unknown key mesh.size"),
    ("[problem]\nkind = poisson\n[mesh]\norder = 3\n", "mesh.order"),
    ("[problem]\nkind = poisson\n[mesh]\norder = two\n", "mesh.order"),
    ("[problem]\nkind = poisson\n[prior]\nrange = -1\n", "prior.range"),
    ("[problem]\nkind = poisson\n[observations]\nscheme = galerkin\n", "observations.scheme"),
    ("[problem]\nkind = poisson\n[burgers]\ndt = 2\n", "burgers.dt"),
    ("[problem]\nkind = poisson\n[output]\nfigures = maybe\n", "output.figures"),
])
def test_spec_errors(text, needle):
    with pytest.raises(SpecError) as exc:
        parse_spec(text)
    assert needle in str(exc.value)


def test_overrides():
    spec = parse_spec("[problem]\nkind = poisson\n", ["mesh.resolutions=4,8", "prior.range=0.3", "output.figures=no"])
    assert spec.mesh.resolutions == (4, 8) and spec.prior.range == 0.3 and spec.output.figures is False
    for bad in ["mesh", "mesh.order", "nosuch.key=1"]:
        with pytest.raises(SpecError):
            parse_spec("[problem]\nkind = poisson\n", [bad])


@pytest.mark.parametrize("path", sorted(SPECS.glob("*.ini")), ids=lambda p: p.stem)
def test_example_specs_roundtrip(path):
    spec = load_spec(path)
    again = parse_spec(spec_to_text(spec))
    assert again.as_dict() == spec.as_dict()


def test_every_problem_kind_has_an_example():
    kinds = {load_spec(p).kind for p in SPECS.glob("*.ini")}
    assert kinds == set(PROBLEM_KINDS)
    assert set(PRIOR_KINDS) == {"matern", "product_matern_like", "advection_diffusion"}


def test_missing_spec_file(tmp_path):
    with pytest.raises(SpecError):
        load_spec(tmp_path / "none.ini")


# -- references ------------------------------------------------------------------

def test_cole_hopf_initial_condition():
    x = np.linspace(-1, 1, 41)
    assert np.abs(reference_cole_hopf(0.1, x, [0.0])[:, 0] + np.sin(np.pi * x)).max() < 1e-10


def test_cole_hopf_odd_symmetry():
    u = reference_cole_hopf(0.1, [0.0, -0.3, 0.3], np.linspace(0, 1, 6))
    assert np.abs(u[0]).max() < 1e-12
    assert np.allclose(u[1], -u[2], atol=1e-12)


def test_cole_hopf_against_finite_differences():
    assert abs(reference_cole_hopf(0.1, [0.5], [0.5])[0, 0] - FD_BURGERS_HALF) < 1e-4


def test_cole_hopf_against_method_of_lines():
    x = np.linspace(-1, 1, 21)
    ch = reference_cole_hopf(0.1, x, [0.25, 1.0])
    mol = burgers_method_of_lines(0.1, 801, 1.0, x_eval=x, t_eval=[0.25, 1.0])
    assert np.abs(ch - mol).max() < 1e-4


def test_cole_hopf_self_convergent():
    x = np.linspace(-1, 1, 11)
    a = reference_cole_hopf(0.1, x, [0.3, 1.0], 100, check=False)
    b = reference_cole_hopf(0.1, x, [0.3, 1.0], 200, check=False)
    assert np.abs(a - b).max() < 1e-8
    with pytest.raises(ContractError):
        reference_cole_hopf(0.0, x, [0.1])


def test_cole_hopf_flags_nonconvergence():
    from gmrfpde.errors import ConvergenceError

    with pytest.raises(ConvergenceError):
        reference_cole_hopf(0.002, np.linspace(-1, 1, 11), [1.0], 10)


def test_manufactured_elliptic_boundary_and_mode():
    u, f = manufactured_elliptic(6)
    y = np.linspace(0, 1, 9)
    assert np.abs(u(np.column_stack([np.zeros(9), y]))).max() == 0
    u1, f1 = manufactured_elliptic(1)
    pts = np.random.default_rng(0).uniform(size=(10, 2))
    s = np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1])
    assert np.allclose(f1(pts) - u1(pts) ** 3, 2 * np.pi**2 * s)
    with pytest.raises(ContractError):
        manufactured_elliptic(0)


def test_manufactured_elliptic_tail():
    g = np.linspace(0, 1, 61)
    X, Y = np.meshgrid(g, g)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    full, _ = manufactured_elliptic(600)
    short, _ = manufactured_elliptic(6)
    assert np.abs(full(pts) - short(pts)).max() < 1e-4
    assert sum(k**-6.0 for k in range(7, 601)) < 1e-4


def test_relative_error_examples():
    t = np.array([1.0, -2.0, 3.0])
    assert relative_l2_error(t, t) == 0
    assert np.isclose(relative_l2_error(np.zeros(3), t), 100.0)
    assert np.isclose(relative_l2_error(1.01 * t, t), 1.0)
    with pytest.raises(ContractError):
        relative_l2_error(t, np.zeros(3))


@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=20), st.floats(0.01, 100), st.booleans(), st.integers(0, 99))
def test_relative_error_scale_invariant(vals, c, neg, seed):
    truth = np.array(vals) + 1.0
    if np.linalg.norm(truth) < 1e-6:
        return
    est = truth + np.random.default_rng(seed).standard_normal(truth.size)
    c = -c if neg else c
    assert np.isclose(relative_l2_error(c * est, c * truth), relative_l2_error(est, truth), rtol=1e-9)


# -- problem data ----------------------------------------------------------------

def test_collocation_points_inside():
    p = collocation_points(50, [(-1, 1), (0, 1)])
    assert p.shape == (50, 2) and np.all(p[:, 0] > -1) and np.all(p[:, 0] < 1) and np.all(p[:, 1] > 0)
    r = collocation_points(20, [(0, 1)], "random", seed=3)
    assert np.array_equal(r, collocation_points(20, [(0, 1)], "random", seed=3))
    with pytest.raises(ContractError):
        collocation_points(5, [(0, 1)], "sobol")


def test_lines_placement():
    t = np.linspace(0, 1, 6)
    p = space_time_collocation(4, (-1, 1), t, "lines")
    assert p.shape == (20, 2) and set(np.round(p[:, 1], 12)) == set(np.round(t[1:], 12))


def test_time_grid_rule():
    assert burgers_time_grid(1.0, 0.02).size == 51
    assert burgers_time_grid(1.0, 0.3).size == 5


def test_random_initial_condition():
    u0 = random_initial_condition(4)
    assert abs(u0(np.array([-1.0]))[0]) < 1e-12 and abs(u0(np.array([1.0]))[0]) < 1e-12
    assert np.abs(u0(np.linspace(-1, 1, 101))).max() <= 1.0


def test_synthetic_darcy_grid():
    g = synthetic_darcy_grid(16, 2)
    assert g.shape == (16, 16) and set(np.unique(g)) <= {3.0, 12.0}
    assert np.array_equal(g, synthetic_darcy_grid(16, 2))


# -- pipelines -------------------------------------------------------------------

def test_poisson_error_decreases():
    spec = parse_spec("[problem]\nkind = poisson\n[mesh]\nresolutions = 8, 16, 32\n[variance]\nmethod = none\n")
    record, _ = execute(spec)
    errs = [lv.relative_error for lv in record.levels]
    assert errs[0] > errs[1] > errs[2]


def test_poisson_inflated_boundary():
    spec = parse_spec("[problem]\nkind = poisson\n[mesh]\nboundary = inflated\nresolutions = 16\n"
                      "[observations]\nnoise_precision = 1e10\nboundary_precision = 1e10\n")
    record, outcomes = execute(spec)
    assert record.relative_error < 2.0
    assert outcomes[0].mean.size == 17 * 17


def test_darcy_file_coefficient(tmp_path):
    grid = synthetic_darcy_grid(8, 11)
    write_coefficient_grid(tmp_path / "a.txt", grid)
    spec = parse_spec(f"[problem]\nkind = darcy\n[mesh]\nresolutions = 32\n"
                      f"[darcy]\ncoefficient_file = {tmp_path / 'a.txt'}\n[variance]\nmethod = none\n")
    record, _ = execute(spec)
    assert record.levels[0].baseline_agreement <= 1e-4


def test_hard_noise_equivalence():
    spec = parse_spec("[problem]\nkind = poisson\n[mesh]\norder = 2\nresolutions = 12\n"
                      "[observations]\nnoise_precision = 1e12\nboundary_precision = 1e12\n[variance]\nmethod = none\n")
    record, _ = execute(spec)
    assert record.levels[0].baseline_agreement <= 1e-5


def test_baseline_faster_than_gmrf():
    spec = load_spec(SPECS / "darcy.ini", ["variance.method=none"])
    record, _ = execute(spec, warmup=True)
    lv = record.levels[0]
    assert lv.baseline_time < sum(lv.timings.values())


def test_elliptic_pipeline():
    spec = load_spec(SPECS / "nonlinear_elliptic.ini", ["mesh.resolutions=6"])
    record, outcomes = execute(spec)
    assert record.levels[0].converged and record.iterations <= 10
    assert outcomes[0].trace


def test_burgers_cole_hopf_fem():
    spec = load_spec(SPECS / "burgers_cole_hopf.ini", ["variance.method=none"])
    record, outcomes = execute(spec)
    assert record.relative_error < 2.0
    assert outcomes[0].grid["estimate"].shape == (101, 51)


def test_burgers_li_collocation():
    spec = load_spec(SPECS / "burgers_li.ini", ["mesh.resolutions=30"])
    record, _ = execute(spec)
    assert record.levels[0].converged and np.isfinite(record.relative_error)


def test_spec_errors_inside_pipeline():
    with pytest.raises(SpecError):
        execute(parse_spec("[problem]\nkind = darcy\n[mesh]\ndim = 1\nresolutions = 4\n"))
    with pytest.raises(SpecError):
        execute(parse_spec("[problem]\nkind = poisson\n[prior]\nkind = advection_diffusion\n"))
    with pytest.raises(SpecError):
        execute(parse_spec("[problem]\nkind = burgers_cole_hopf\n[mesh]\norder = 1\nresolutions = 8\n"
                           "[observations]\nscheme = collocation\n"))


def test_stage_attribution(monkeypatch):
    def boom(*a, **k):
        raise NotPositiveDefiniteError(3, 3, -1.0)

    monkeypatch.setattr(experiments, "condition_affine", boom)
    with pytest.raises(StageError) as exc:
        execute(parse_spec("[problem]\nkind = poisson\n[mesh]\nresolutions = 4\n"))
    assert exc.value.stage == "conditioning"
    assert str(exc.value).startswith("[conditioning] NotPositiveDefiniteError")


def test_determinism():
    text = "[problem]\nkind = burgers_li\nseed = 5\n[mesh]\ndim = 1\nresolutions = 12\norder = 2\n" \
           "[observations]\nscheme = collocation\ncollocation_count = 60\n[burgers]\ndt = 0.1\n[variance]\nsamples = 2\n"
    a, oa = execute(parse_spec(text))
    b, ob = execute(parse_spec(text))
    fa, fb = a.numeric_fields(), b.numeric_fields()
    assert fa.keys() == fb.keys()
    assert all(fa[k] == fb[k] or (fa[k] != fa[k] and fb[k] != fb[k]) for k in fa)
    assert np.array_equal(oa[0].mean, ob[0].mean) and np.array_equal(oa[0].samples, ob[0].samples)


def test_artifacts(tmp_path):
    spec = parse_spec("[problem]\nkind = poisson\n[mesh]\ndim = 1\nresolutions = 4, 8\n[variance]\nsamples = 1\n")
    record = run_experiment(spec, tmp_path, figures=True)
    data = json.loads((tmp_path / "result.json").read_text())
    assert list(data)[:8] == ["kind", "prior", "seed", "relative_error", "n_dofs", "iterations", "decrement", "timings"]
    assert data["decrement"] is None and data["relative_error"] >= 0
    assert all(v >= 0 for v in data["timings"].values())
    with open(tmp_path / "solution.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "mean", "std"] and len(rows) == 10
    # 9 significant digits
    assert all(len(v.split("e")[0].replace("-", "").replace(".", "").lstrip("0")) <= 9 for v in rows[3])
    assert (tmp_path / "trace.csv").read_text().startswith("iteration,objective")
    for name in ("solution.png", "convergence.png", "timings.png"):
        assert (tmp_path / name).stat().st_size > 1000
    assert set(record.files) >= {"solution", "trace", "result", "fig_solution"}


def test_space_time_figure(tmp_path):
    spec = load_spec(SPECS / "burgers_li.ini", ["mesh.resolutions=10", "burgers.dt=0.25"])
    record = run_experiment(spec, tmp_path)
    assert (tmp_path / "space_time.png").exists() and (tmp_path / "trace.png").exists()
    with open(tmp_path / "solution.csv") as fh:
        assert next(csv.reader(fh)) == ["t", "x", "mean", "std"]
