"""Meshes, Lagrange spaces, assembly and constraint handling."""
from .assembly import (
    DifferentialOperatorSpec,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    element_mass,
    element_stiffness,
    lump_mass,
    lump_mass_auto,
)
from .constraints import (
    DEFAULT_BOUNDARY_EPS2,
    Constraint,
    ConstraintSet,
    apply_constraints,
    dirichlet_constraints,
    periodic_constraints,
)
from .mesh import (
    Mesh,
    build_interval_mesh,
    build_interval_mesh_from_nodes,
    build_rect_mesh,
    build_unit_square_mesh,
    read_coefficient_grid,
    sample_cell_field,
    write_coefficient_grid,
    write_mesh,
)
from .space import FeSpace, build_space, eval_basis, local_basis_values, reference_basis

__all__ = [name for name in dir() if not name.startswith("_")]
