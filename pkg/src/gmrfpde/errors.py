"""Exception hierarchy shared by all subpackages."""


class GmrfPdeError(Exception):
    """Base class for library errors."""


class ContractError(GmrfPdeError, ValueError):
    """An input violates a documented precondition."""


class StructuralError(ContractError):
    """A sparse structure is malformed (bad index, asymmetric pattern, ...)."""


class NotPositiveDefiniteError(GmrfPdeError, ArithmeticError):
    """Cholesky hit a non-positive pivot.

    ``index`` is the pivot position in the permuted ordering, ``original_index``
    the corresponding row/column of the unpermuted matrix.
    """

    def __init__(self, index, original_index=None, pivot=None):
        self.index = int(index)
        self.original_index = None if original_index is None else int(original_index)
        self.pivot = pivot
        msg = f"matrix is not positive definite: pivot {self.index}"
        if self.original_index is not None:
            msg += f" (original index {self.original_index})"
        if pivot is not None:
            msg += f" has value {pivot:.3e}"
        super().__init__(msg)


class IndefiniteError(GmrfPdeError, ArithmeticError):
    """CG encountered non-positive curvature."""


class LocationError(GmrfPdeError, ValueError):
    """A point lies outside the mesh."""


class LumpingError(GmrfPdeError, ValueError):
    """Row-sum lumping produced a non-positive diagonal entry."""


class StagnationError(GmrfPdeError, RuntimeError):
    """Line search could not find an acceptable step."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


class SpecError(GmrfPdeError, ValueError):
    """A problem specification file is invalid."""


class StageError(GmrfPdeError, RuntimeError):
    """Wraps a numerical failure with the pipeline stage it happened in."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


class ConvergenceError(GmrfPdeError, RuntimeError):
    """An iterative method stopped at its iteration limit."""
