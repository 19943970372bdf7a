"""Exception hierarchy shared by the numerical pipelines."""


class SqueezedBTCError(Exception):
    """Base class for all package errors."""


class SizeError(SqueezedBTCError, ValueError):
    """A requested dimension exceeds a configured cap or is invalid."""


class DimensionMismatchError(SqueezedBTCError, ValueError):
    pass


class ParameterError(SqueezedBTCError, ValueError):
    """Physical parameters violate a model invariant."""


class NumericalError(SqueezedBTCError, RuntimeError):
    """A solver failed; ``diagnostics`` carries whatever was known at failure."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConvergenceError(NumericalError):
    pass


class MultiplicityError(NumericalError):
    """The Liouvillian has more than one steady state."""


class IntegrationError(NumericalError):
    """Adaptive time stepping broke down (step size underflow)."""

    def __init__(self, message, t_fail, diagnostics=None):
        super().__init__(message, diagnostics)
        self.t_fail = t_fail
