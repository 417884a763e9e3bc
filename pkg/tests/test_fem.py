import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from numpy.polynomial.legendre import leggauss

from gmrfpde.bench import fem_baseline_solve, poisson_manufactured, relative_l2_error
from gmrfpde.errors import ContractError, LocationError, LumpingError
from gmrfpde.fem import (
    ConstraintSet,
    DifferentialOperatorSpec,
    apply_constraints,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    build_interval_mesh,
    build_space,
    build_unit_square_mesh,
    dirichlet_constraints,
    eval_basis,
    lump_mass,
    periodic_constraints,
    read_coefficient_grid,
    sample_cell_field,
    write_coefficient_grid,
    write_mesh,
)

LAPLACE = DifferentialOperatorSpec(diffusion=1.0)


# -- meshes -----------------------------------------------------------------

def test_interval_mesh_single():
    m = build_interval_mesh(1, 0, 1)
    assert np.allclose(m.nodes[:, 0], [0, 1]) and m.n_elements == 1


def test_interval_mesh_widths():
    assert np.allclose(build_interval_mesh(4).element_measures(), 0.25)
    assert build_interval_mesh(750).n_elements == 750


def test_interval_mesh_errors():
    with pytest.raises(ContractError):
        build_interval_mesh(0)
    with pytest.raises(ContractError):
        build_interval_mesh(3, 1.0, 0.0)


@pytest.mark.parametrize("n,corners,tris", [(1, 4, 2), (2, 9, 8)])
def test_unit_square_counts(n, corners, tris):
    m = build_unit_square_mesh(n)
    assert m.n_nodes == corners and m.n_elements == tris


@given(st.integers(1, 12))
def test_unit_square_partition(n):
    m = build_unit_square_mesh(n)
    areas = m.element_measures()
    assert np.all(areas > 0)  # counter-clockwise
    assert abs(areas.sum() - 1.0) < 1e-12
    assert set(np.concatenate(list(m.boundary_tags.values())).tolist()) == {
        i for i, x in enumerate(m.nodes) if min(x) == 0 or max(x) == 1}


def test_locate_outside():
    with pytest.raises(LocationError):
        build_unit_square_mesh(2).locate([[1.5, 0.5]])


def test_mesh_and_grid_files(tmp_path):
    m = build_unit_square_mesh(2)
    write_mesh(tmp_path / "m.txt", m)
    lines = (tmp_path / "m.txt").read_text().splitlines()
    assert "nodes 9" in lines and "elements 8" in lines
    grid = np.arange(6.0).reshape(2, 3)
    write_coefficient_grid(tmp_path / "g.txt", grid)
    assert (tmp_path / "g.txt").read_text().splitlines()[0] == "3 2"
    assert np.array_equal(read_coefficient_grid(tmp_path / "g.txt"), grid)
    (tmp_path / "bad.txt").write_text("2 2\n1 2 3\n")
    with pytest.raises(ContractError):
        read_coefficient_grid(tmp_path / "bad.txt")


def test_sample_cell_field():
    m = build_unit_square_mesh(4)
    grid = np.array([[1.0, 2.0], [3.0, 4.0]])
    a = sample_cell_field(m, grid)
    c = m.centroids()
    expect = grid[(c[:, 1] > 0.5).astype(int), (c[:, 0] > 0.5).astype(int)]
    assert np.array_equal(a, expect)


# -- spaces and basis evaluation ---------------------------------------------

def test_quadratic_dofs():
    assert build_space(build_interval_mesh(3), 2).n_dofs == 7
    assert build_space(build_unit_square_mesh(2), 2).n_dofs == 25


@given(st.integers(1, 2), st.integers(1, 2), st.integers(0, 1000))
def test_partition_of_unity(dim, order, seed):
    mesh = build_interval_mesh(5) if dim == 1 else build_unit_square_mesh(3)
    space = build_space(mesh, order)
    pts = np.random.default_rng(seed).uniform(size=(20, dim))
    assert np.allclose(eval_basis(space, pts).sum(axis=1), 1.0, atol=1e-12)


def test_node_evaluation_one_hot():
    space = build_space(build_interval_mesh(4), 1)
    row = eval_basis(space, [0.5]).toarray()[0]
    assert np.array_equal(row, np.eye(5)[2])


def test_quadratic_derivative_at_midpoint():
    h = 0.2
    space = build_space(build_interval_mesh(5), 2)
    u = space.interpolate(lambda x: x[:, 0] ** 2)
    assert abs((eval_basis(space, [h / 2], (1,)) @ u)[0] - h) < 1e-12


@given(st.integers(0, 1000))
def test_polynomial_reproduction_2d(seed):
    space = build_space(build_unit_square_mesh(3), 2)
    a = np.random.default_rng(seed).uniform(-1, 1, 6)
    p = lambda x: a[0] + a[1] * x[:, 0] + a[2] * x[:, 1] + a[3] * x[:, 0] ** 2 + a[4] * x[:, 0] * x[:, 1] + a[5] * x[:, 1] ** 2
    u = space.interpolate(p)
    pts = np.random.default_rng(seed + 1).uniform(size=(15, 2))
    x, y = pts[:, 0], pts[:, 1]
    assert np.allclose(eval_basis(space, pts) @ u, p(pts), atol=1e-10)
    assert np.allclose(eval_basis(space, pts, (1, 0)) @ u, a[1] + 2 * a[3] * x + a[4] * y, atol=1e-10)
    assert np.allclose(eval_basis(space, pts, (0, 1)) @ u, a[2] + a[4] * x + 2 * a[5] * y, atol=1e-10)
    assert np.allclose(eval_basis(space, pts, (2, 0)) @ u, 2 * a[3], atol=1e-9)
    assert np.allclose(eval_basis(space, pts, (1, 1)) @ u, a[4], atol=1e-9)


def test_eval_basis_order_limit():
    space = build_space(build_interval_mesh(2), 2)
    with pytest.raises(ContractError):
        eval_basis(space, [0.3], (3,))


# -- assembly ---------------------------------------------------------------

def test_mass_single_linear_element():
    M = assemble_mass(build_space(build_interval_mesh(1), 1)).toarray()
    assert np.allclose(M, [[1 / 3, 1 / 6], [1 / 6, 1 / 3]])


@pytest.mark.parametrize("dim,order", [(1, 1), (1, 2), (2, 1), (2, 2)])
def test_mass_total_is_measure(dim, order):
    mesh = build_interval_mesh(7) if dim == 1 else build_unit_square_mesh(5)
    M = assemble_mass(build_space(mesh, order))
    assert abs(M.sum() - 1.0) < 1e-12
    assert abs(M - M.T).max() <= 1e-14 * abs(M).max()


def test_quadratic_mass_dense_oracle():
    space = build_space(build_interval_mesh(2), 2)
    M = assemble_mass(space).toarray()
    # dense oracle: global quadratic basis on each element, high-order Gauss rule
    z, w = leggauss(12)
    D = np.zeros((5, 5))
    for e, (a, b) in enumerate([(0.0, 0.5), (0.5, 1.0)]):
        nodes = space.cell_dofs[e]
        xs = space.dof_coords[nodes, 0]
        x = a + (b - a) * (z + 1) / 2
        phi = np.array([np.prod([(x - xs[k]) / (xs[j] - xs[k]) for k in range(3) if k != j], axis=0) for j in range(3)])
        D[np.ix_(nodes, nodes)] += (phi * w * (b - a) / 2) @ phi.T
    assert np.allclose(M, D, atol=1e-12)


def test_stiffness_single_element():
    K = assemble_stiffness(build_space(build_interval_mesh(1), 1), LAPLACE).toarray()
    assert np.allclose(K, [[1, -1], [-1, 1]])


def test_reaction_only_is_scaled_mass():
    space = build_space(build_unit_square_mesh(3), 2)
    K = assemble_stiffness(space, DifferentialOperatorSpec(reaction=2.5))
    assert abs(K - 2.5 * assemble_mass(space)).max() < 1e-14


def test_constants_in_nullspace():
    space = build_space(build_unit_square_mesh(4), 1)
    K = assemble_stiffness(space, LAPLACE)
    assert np.abs(K @ np.ones(space.n_dofs)).max() < 1e-12
    assert abs(K - K.T).max() <= 1e-14 * abs(K).max()


def test_advection_weak_form():
    space = build_space(build_interval_mesh(6), 1)
    K = assemble_stiffness(space, DifferentialOperatorSpec(advection=(1.5,)))
    u = space.interpolate(lambda x: x[:, 0])
    # int phi_i * 1.5 * u' = 1.5 * int phi_i
    assert np.allclose(K @ u, 1.5 * assemble_mass(space).sum(axis=1).A1)


def test_operator_needs_a_term():
    with pytest.raises(ContractError):
        DifferentialOperatorSpec()


def test_load_vector_constant():
    space = build_space(build_unit_square_mesh(4), 2)
    b = assemble_load(space, lambda x: np.ones(len(x)))
    assert abs(b.sum() - 1.0) < 1e-12


# -- lumping ----------------------------------------------------------------

def test_lump_closed_form():
    D = lump_mass(sp.csc_matrix([[1 / 3, 1 / 6], [1 / 6, 1 / 3]]))
    assert np.allclose(D.diagonal(), 0.5)


def test_lump_interval_entries():
    M = assemble_mass(build_space(build_interval_mesh(10), 1))
    d = lump_mass(M).diagonal()
    expect = np.full(11, 0.1)
    expect[[0, -1]] = 0.05
    assert np.allclose(d, expect)
    assert abs(d.sum() - M.sum()) < 1e-14


def test_lump_quadratic_triangles_fail():
    M = assemble_mass(build_space(build_unit_square_mesh(2), 2))
    with pytest.raises(LumpingError):
        lump_mass(M)
    d = lump_mass(M, "diagonal").diagonal()
    assert np.all(d > 0) and abs(d.sum() - 1.0) < 1e-12


# -- constraints ------------------------------------------------------------

def _reduced_dense_solve(A, b, keep):
    u = np.zeros(A.shape[0])
    u[keep] = np.linalg.solve(A[np.ix_(keep, keep)], b[keep])
    return u


@pytest.mark.parametrize("dim,order", [(1, 1), (1, 2), (2, 1), (2, 2)])
def test_dirichlet_matches_eliminate_and_solve(dim, order):
    mesh = build_interval_mesh(12) if dim == 1 else build_unit_square_mesh(4 if order == 2 else 8)
    space = build_space(mesh, order)
    assert space.n_dofs <= 100
    op = DifferentialOperatorSpec(diffusion=1.0, reaction=0.5)
    K = assemble_stiffness(space, op)
    b = assemble_load(space, lambda x: np.cos(3 * x[:, 0]) + x[:, -1])
    cs = dirichlet_constraints(space.boundary_dofs(), space.n_dofs)
    A2, b2 = apply_constraints(K, b, cs, "system")
    u = cs.expansion() @ np.linalg.solve(A2.toarray(), b2)
    ref = _reduced_dense_solve(K.toarray(), b, cs.free)
    assert np.abs(u - ref).max() <= 1e-10
    assert np.all(u[cs.constrained] == 0)


def test_periodic_matches_ring_assembly():
    n = 16
    h = 1.0 / n
    space = build_space(build_interval_mesh(n), 1)
    K = assemble_stiffness(space, DifferentialOperatorSpec(diffusion=1.0, reaction=2.0))
    b = assemble_load(space, lambda x: np.sin(2 * np.pi * x[:, 0]) + 0.3)
    cs = periodic_constraints([(n, 0)], space.n_dofs)
    A2, b2 = apply_constraints(K, b, cs, "system")
    u = cs.expansion() @ np.linalg.solve(A2.toarray(), b2)
    # circulant oracle on a true ring of n nodes
    I = np.eye(n)
    R = np.roll(I, 1, axis=1)
    Kr = (2 * I - R - R.T) / h + 2.0 * h * (4 * I + R + R.T) / 6
    br = np.array([b[i] for i in range(n)])
    br[0] += b[n]
    ur = np.linalg.solve(Kr, br)
    assert np.abs(u[:n] - ur).max() <= 1e-10
    assert u[n] == u[0]


def test_periodic_2d_matches_reduced():
    space = build_space(build_unit_square_mesh(6), 1)
    from gmrfpde.priors import embed_boundary

    cs = embed_boundary(space, "periodic")
    K = assemble_stiffness(space, DifferentialOperatorSpec(diffusion=1.0, reaction=1.0)).toarray()
    b = assemble_load(space, lambda x: np.sin(2 * np.pi * x[:, 0]) * np.cos(2 * np.pi * x[:, 1]))
    A2, b2 = apply_constraints(sp.csc_matrix(K), b, cs, "system")
    u = cs.expansion() @ np.linalg.solve(A2.toarray(), b2)
    E = cs.expansion().toarray()[:, cs.free]
    ref = E @ np.linalg.solve(E.T @ K @ E, E.T @ b)
    assert np.abs(u - ref).max() <= 1e-10


def test_empty_constraints_unchanged(rng):
    A = sp.random(5, 5, 0.5, random_state=rng, format="csc")
    b = rng.standard_normal(5)
    A2, b2 = apply_constraints(A, b, ConstraintSet.empty(5))
    assert abs(A2 - A).max() == 0 and np.array_equal(b2, b)


def test_precision_pair_mode():
    space = build_space(build_interval_mesh(4), 1)
    K, M = assemble_stiffness(space, LAPLACE), assemble_mass(space)
    cs = dirichlet_constraints([0, 4], 5, eps2=1e-6)
    K2, M2 = apply_constraints(K, M, cs, "precision_pair")
    assert np.array_equal(K2.toarray()[0], np.eye(5)[0])
    assert M2[0, 0] == 1e-6 and M2[4, 1] == 0


def test_circular_constraints_rejected():
    with pytest.raises(ContractError):
        periodic_constraints([(0, 1), (1, 0)], 3)


# -- convergence and baseline --------------------------------------------------

def test_baseline_quadratic_solution():
    space = build_space(build_interval_mesh(10), 1)
    cs = dirichlet_constraints(space.boundary_dofs(), space.n_dofs)
    u = fem_baseline_solve(space, DifferentialOperatorSpec(diffusion=1.0, rhs=lambda x: np.ones(len(x))), cs)
    x = space.dof_coords[:, 0]
    assert np.abs(u - x * (1 - x) / 2).max() < 1e-12


@pytest.mark.parametrize("order", [1, 2])
def test_poisson_1d_convergence(order):
    u_true, f = poisson_manufactured(1)
    errs = []
    for n in (8, 16, 32):
        space = build_space(build_interval_mesh(n), order)
        cs = dirichlet_constraints(space.boundary_dofs(), space.n_dofs)
        u = fem_baseline_solve(space, DifferentialOperatorSpec(diffusion=1.0, rhs=f), cs)
        errs.append(relative_l2_error(u, u_true, space=space))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(rates - (order + 1)) <= 0.3)
