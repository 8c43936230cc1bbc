"""Exception types shared across the package."""


class VmmixError(Exception):
    """Base class for all package-specific errors."""


class DomainError(VmmixError):
    """A density or family was evaluated outside its parameter domain."""


class KinkError(VmmixError):
    """A derivative was requested at (or too close to) a non-differentiable point.

    ``indices`` carries the offending coordinate indices when the check was
    performed on a vector.
    """

    def __init__(self, message, indices=None):
        super().__init__(message)
        self.indices = tuple(indices) if indices is not None else None


class UnsupportedMixing(VmmixError):
    """The mixing law has no evaluable density, so quadrature cannot be run."""


class UnsupportedPenalty(VmmixError):
    """The requested operation is not defined for this penalty family."""


class SingularSystem(VmmixError):
    """A linear system could not be solved reliably.

    Raised when the jitter ladder is exhausted, or (in strict mode) when the
    estimated reciprocal condition number falls below the requested floor.
    """

    def __init__(self, message, rcond=None):
        super().__init__(message)
        self.rcond = rcond


class DimensionMismatch(VmmixError):
    """Array shapes passed to a linear-algebra helper do not agree."""


class NonFiniteObjective(VmmixError):
    """The objective became NaN or infinite during iteration."""


class IntegrationFailure(VmmixError):
    """Adaptive quadrature failed to reach its tolerance."""


class UndefinedMean(VmmixError):
    """The mixing law has no finite mean, so the tilted prior is undefined."""


class InsufficientData(VmmixError):
    """Not enough observations for the requested procedure."""


class ParseError(VmmixError):
    """A data file could not be parsed; carries the 1-based line and column."""

    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class CodingError(VmmixError):
    """Response labels are not coded as required by the task."""
