import warnings


class OclaserError(Exception):
    """Base class of every error raised by oclaser."""


class ConfigError(OclaserError, ValueError):
    pass


class ParameterError(OclaserError, ValueError):
    pass


class SolverError(OclaserError, RuntimeError):
    pass


class DegenerateRegimeError(SolverError):
    pass


class GridTooSmallError(SolverError):

    def __init__(self, message: str, mode: str = "alpha", tail: float = float("nan")) -> None:
        super().__init__(message)
        self.mode = mode
        self.tail = tail


class NonNormalizableError(SolverError):
    pass


class ConvergenceError(SolverError):
    pass


class TraceDriftError(SolverError):
    pass


class DegenerateSteadyStateError(SolverError):
    pass


class FitError(SolverError):
    pass


class NotApplicableError(SolverError):
    pass


class PhysicsWarning(UserWarning):
    """Non-fatal diagnostic about the physical regime of a computation."""


def warn_physics(message: str, logger=None) -> None:
    if logger is not None:
        logger.warning(message)
    warnings.warn(message, PhysicsWarning, stacklevel=3)
