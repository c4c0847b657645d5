"""Exception hierarchy shared across the package."""


class GroverMeshError(Exception):
    """Base class for all package errors."""


class DimensionError(GroverMeshError, ValueError):
    """Array shapes do not agree with the operation."""


class DegenerateStateError(GroverMeshError, ValueError):
    """A state or count vector carries no probability mass."""


class ConstraintViolationError(GroverMeshError, ValueError):
    """Inputs violate a domain constraint (e.g. N/M < 4 for the deterministic search)."""


class SolverError(GroverMeshError, RuntimeError):
    """A numerical solver failed to converge.

    Attributes
    ----------
    residual : float
        Best residual reached before giving up.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class InfeasibleInversionError(GroverMeshError, ValueError):
    """No phase wrapping yields admissible heater voltages."""

    def __init__(self, message, heaters=()):
        heaters = list(heaters)
        super().__init__(f"{message}; offending heaters: {heaters}")
        self.heaters = heaters


class TrainingError(GroverMeshError, RuntimeError):
    """Clear-box training diverged."""

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class ConsistencyError(GroverMeshError, RuntimeError):
    """An internal invariant was violated (e.g. a state left the Grover plane)."""
