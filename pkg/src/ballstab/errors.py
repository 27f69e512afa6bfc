"""Exception types raised across the package."""


class BallstabError(Exception):
    """Base class for library errors."""


class BracketError(BallstabError):
    """A root finder could not bracket a sign change."""


class NotStarShapedError(BallstabError, ValueError):
    """The radial function is not positive at every sample node."""


class ConvergenceError(BallstabError):
    """An iteration did not reach its tolerance within its budget."""


class MeshError(BallstabError):
    """Mesh generation produced a degenerate simplex."""


class DeformationError(BallstabError, ValueError):
    """The pullback map is not orientation preserving."""


class SolverError(BallstabError):
    """A linear or eigen solve failed a consistency check."""


class AdmissibilityError(BallstabError, ValueError):
    """A shape lies outside the regime an operation is defined for."""


class RegimeWarning(UserWarning):
    """A diagnostic was computed outside its small-norm regime."""
