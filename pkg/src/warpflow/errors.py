"""Exception types shared across the package."""


class WarpflowError(Exception):
    """Base class for all package-specific errors."""


class GridMismatchError(WarpflowError):
    """Operands live on different grids or have incompatible shapes."""


class DegreeMismatchError(WarpflowError):
    """Form degrees are incompatible for the requested operation."""


class DegenerateMetricError(WarpflowError):
    """A metric failed its positive-definiteness check.

    Carries the offending grid point and the smallest eigenvalue found there.
    """

    def __init__(self, point, min_eig):
        self.point = tuple(int(i) for i in point)
        self.min_eig = float(min_eig)
        super().__init__(
            f"metric is not positive-definite at grid point {self.point}: "
            f"smallest eigenvalue {self.min_eig:.3e}"
        )


class PositivityLostError(WarpflowError):
    """A flow step produced a metric that is no longer positive-definite."""


class CflViolationError(WarpflowError):
    """The requested time step exceeds the diffusive CFL bound."""


class BlowUpDetected(WarpflowError):
    """The monitored blow-up quantity exceeded its threshold or went non-finite."""


class PotentialMismatchError(WarpflowError):
    """A supplied potential A does not satisfy dA = F within tolerance."""


class ConfigError(WarpflowError):
    """Configuration is syntactically or semantically invalid.

    ``path`` points at the offending field, e.g. ``flow.dt``.
    """

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class SingularJacobianError(WarpflowError):
    """Newton iteration hit a numerically singular Jacobian."""


class NoConvergenceError(WarpflowError):
    """An iterative solver exhausted its iteration budget."""
