"""Exception hierarchy shared by all modules."""


class ImpulsiveError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ImpulsiveError, ValueError):
    """An argument lies outside the domain of an operation."""


class RangeError(ImpulsiveError, ValueError):
    """A requested value is not attained (e.g. inverting a bounded function)."""


class ResourceError(ImpulsiveError):
    """A computation would exceed a documented size cap."""


class DslError(ImpulsiveError):
    """Model text could not be parsed or failed validation.

    ``diagnostics`` holds every message found, the first of which is also
    the exception text.
    """

    def __init__(self, message, diagnostics=None, line=None, column=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [message])
        self.line = line
        self.column = column


class DslSyntaxError(DslError):
    pass


class EvalError(ImpulsiveError, ArithmeticError):
    """Numerical evaluation of an expression failed.

    ``subexpression`` is the canonical text of the offending node.
    """

    def __init__(self, message, subexpression=None, time=None):
        if time is not None:
            message = f"t={time!r}: {message}"
        super().__init__(message)
        self.subexpression = subexpression
        self.time = time


class SimError(ImpulsiveError):
    """Simulation could not be set up or carried out."""


class DivergedError(SimError):
    """State norm exceeded the blow-up cap."""

    def __init__(self, message, last_time):
        super().__init__(message)
        self.last_time = last_time


class CompositionError(ImpulsiveError):
    """A composite certificate cannot be built (small-gain infeasible)."""

    def __init__(self, message, worst_cycle=None):
        super().__init__(message)
        self.worst_cycle = worst_cycle
