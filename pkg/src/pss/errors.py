"""Exception hierarchy shared by all modules.

The CLI maps :class:`SchemaError` to exit code 2 and every other
:class:`PssError` subclass (numerical failures) to exit code 3.
"""


class PssError(Exception):
    """Base class for library errors."""


class SchemaError(PssError):
    """Invalid configuration or malformed user input."""


class MalformedInputError(SchemaError):
    """A collection violates a structural precondition (e.g. duplicates)."""


class InvalidCapError(SchemaError):
    """A dimension cap is smaller than the active dimension of a set."""


class NumericalError(PssError):
    """Base class for failures raised during a computation."""


class SurrogateViolationError(NumericalError):
    """A surrogate sequence turned out not to be monotone or anchored."""


class SolverError(NumericalError):
    """The truth solver met an indefinite or inaccurate system."""


class OrderingError(NumericalError):
    """A recursion met an index whose predecessors are not yet available."""


class TruncationInsufficientError(NumericalError):
    """The model has too few parametric dimensions for the requested accuracy."""


class SequenceTooShortError(NumericalError):
    """A univariate point sequence is shorter than the required degree."""


class QuadratureBudgetError(NumericalError):
    """A tensor quadrature would exceed the node budget."""


class ConfigurationError(SchemaError):
    """A configuration is well formed but cannot meet its own targets."""
