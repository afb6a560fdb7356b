"""Exception hierarchy shared by all modules."""


class WickSPDEError(Exception):
    """Base class for package errors."""


class ParameterError(WickSPDEError, ValueError):
    pass


class TruncationRequiredError(ParameterError):
    """Infinite-activity subordinator sampled without a positive small-jump cutoff."""


class RangeError(WickSPDEError, ValueError):
    pass


class EvaluationError(WickSPDEError, ArithmeticError):
    pass


class UnsupportedSpecError(WickSPDEError, NotImplementedError):
    pass


class GridError(WickSPDEError, ValueError):
    pass


class InterpolationPolicyError(WickSPDEError, ValueError):
    pass


class DomainError(WickSPDEError, ValueError):
    pass


class StationarityUnsupportedError(WickSPDEError, ValueError):
    pass


class PairingError(WickSPDEError, ValueError):
    pass


class ConstraintError(ParameterError):
    """A parameter window required by a convergence or well-posedness result is violated."""


class DataError(WickSPDEError, ValueError):
    pass


class EnsembleTooSmallError(WickSPDEError, ValueError):
    pass


class SolverError(WickSPDEError, RuntimeError):
    pass


class ConfigError(ParameterError):
    pass
