"""Information operators, nonlinear residuals and Gauss-Newton inference."""
from .gauss_newton import (
    GaussNewtonConfig,
    GaussNewtonResult,
    IterationRecord,
    LineSearch,
    gauss_newton,
    gauss_newton_matrix,
    gradient,
    objective_roundoff,
    laplace_posterior,
    objective,
)
from .operators import (
    LinearInformationOperator,
    collocation_operator,
    differential_rows,
    fem_observation_operator,
    lift_to_slice,
    point_observation_operator,
    stack_operators,
    weak_row_map,
)
from .residuals import (
    NonlinearResidual,
    burgers_residual,
    from_information_operator,
    linear_residual,
    nonlinear_elliptic_residual,
    snap_to_slices,
    stack_residuals,
)

__all__ = [name for name in dir() if not name.startswith("_")]
