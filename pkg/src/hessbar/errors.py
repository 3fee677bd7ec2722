"""Exception hierarchy shared by all hessbar modules."""


class HessbarError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(HessbarError, ValueError):
    """Invalid parameters or configuration files."""


class InteriorityError(HessbarError, ValueError):
    """A point that should be strictly positive is not."""


class RankDeficientConstraints(HessbarError, ValueError):
    pass


class EmptyAffineSet(HessbarError, ValueError):
    pass


class SingularMetricSystem(HessbarError, ArithmeticError):
    """The reduced system A H^-1 A^T could not be factorized, even with jitter."""


class ArmijoExhausted(HessbarError, ArithmeticError):
    """Backtracking hit its cap without meeting the sufficient decrease test."""


class InfeasibleStart(HessbarError, ValueError):
    pass


class UnsupportedGeometry(HessbarError, ValueError):
    pass


class StructuralMismatch(HessbarError, ValueError):
    pass


class Unreachable(HessbarError, ValueError):
    pass


class GenerationFailed(HessbarError, RuntimeError):
    pass


class InsufficientData(HessbarError, ValueError):
    pass


class UnsupportedKind(HessbarError, ValueError):
    pass


class OptimumUnavailable(HessbarError, LookupError):
    pass
