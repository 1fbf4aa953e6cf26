"""Exception hierarchy shared by all modules."""


class ErfSmoothError(Exception):
    """Base class for package errors."""


class DomainError(ErfSmoothError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class ResolutionError(ErfSmoothError, ValueError):
    """A discretisation is too coarse to produce a trustworthy result."""


class DimensionError(ErfSmoothError, ValueError):
    """Array shapes do not agree."""


class UnsupportedCombinationError(ErfSmoothError, ValueError):
    """The requested combination of options has no implementation."""


class NumericalError(ErfSmoothError, ArithmeticError):
    """A non-finite value appeared during a computation.

    Attributes
    ----------
    tau : float or None
        Regularisation weight of the failing solve when raised from a path run.
    trace : IterateTrace or None
        Partial iterate trace up to the failure, when available.
    """

    def __init__(self, message, *, tau=None, trace=None):
        super().__init__(message)
        self.tau = tau
        self.trace = trace


class DegenerateCurvatureError(NumericalError):
    """A line-search denominator vanished."""


class DegenerateGradientError(ErfSmoothError, ArithmeticError):
    """A gradient used as a normaliser is zero."""


class DegenerateProblemError(ErfSmoothError, ValueError):
    """The problem data make the requested quantity meaningless."""


class ParseError(ErfSmoothError, ValueError):
    """A file could not be parsed.

    Attributes
    ----------
    line : int or None
        1-based line number of the offending line.
    """

    def __init__(self, message, *, path=None, line=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.path = path
        self.line = line
