"""Exception types shared across the package."""


class UnsupportedDimension(ValueError):
    """Raised when a routine is called with a dimension other than 2 or 3."""


class NonPositiveDeterminant(ValueError):
    """Raised when a joint or deformation has det <= 0 somewhere."""


class RankOneViolation(ValueError):
    """Raised when adjacent affine pieces are not rank-one connected."""


class ConstraintViolation(ValueError):
    """Raised when the parameters of a built-in joint family are inadmissible."""


class GeometryMismatch(ValueError):
    """Raised when a closed-form laminate routine gets a non-aligned profile."""


class ConfigError(ValueError):
    """Raised for malformed or schema-violating configuration."""


class SolverDivergence(RuntimeError):
    """Raised when the conjugate gradient solver fails to reach its tolerance."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class SingularQ(RuntimeError):
    """Raised when the effective quadratic-form matrix is numerically singular."""


class LineSearchFailure(RuntimeError):
    """Raised when backtracking cannot find a decrease of the energy."""


class NonConvergence(RuntimeError):
    """Raised when the nonlinear minimizer hits its iteration cap."""
