"""Exception taxonomy shared across the toolkit.

Validation errors mean a request was malformed or infeasible before any
numerics ran.  Numerical errors mean a solver or iteration failed to reach
its tolerance.  The command line maps the former to exit code 2 and the
latter to exit code 3.
"""


class ValidationError(ValueError):
    """Bad or infeasible input: parameter out of range, grid too narrow, etc."""


class NumericalError(RuntimeError):
    """A solver or iteration did not reach its tolerance."""


class NoExitError(ValidationError):
    """The ball exhausts the cloud, so the walk can never leave it."""


class EmptyComplementError(NoExitError):
    """Killed-operator variant of NoExitError: complement carries no mass."""


class WindowTooNarrowError(ValidationError):
    """A scale grid does not fit between sample resolution and diameter."""


class EmptyBallError(ValidationError):
    """A queried ball contains no sample points."""


class DeltaTooSmallError(ValidationError):
    """Cover gauge below the resolution at which covering balls make sense."""


class SingularSolveError(NumericalError):
    """Linear solve failed; carries the achieved residual when known."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConvergenceFailureError(NumericalError):
    """An iterative method hit its cap before reaching tolerance."""


class DisconnectedSpaceWarning(UserWarning):
    """The short-range ball graph splits into several components."""


class PathCapWarning(UserWarning):
    """Some sampled walk paths hit the step cap and were excluded, not truncated."""
