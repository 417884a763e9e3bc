"""Benchmark problems, reference solutions and the experiment runner."""
from .config import PRIOR_KINDS, PROBLEM_KINDS, ProblemSpec, load_spec, parse_spec, spec_to_text
from .experiments import LevelResult, ResultRecord, burgers_time_grid, execute, run_experiment
from .problems import (
    collocation_points,
    fem_baseline_solve,
    poisson_manufactured,
    random_initial_condition,
    space_time_collocation,
    synthetic_darcy_grid,
)
from .reference import (
    burgers_method_of_lines,
    manufactured_elliptic,
    reference_cole_hopf,
    relative_l2_error,
)

__all__ = [name for name in dir() if not name.startswith("_")]
