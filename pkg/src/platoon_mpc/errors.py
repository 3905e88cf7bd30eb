"""Exception hierarchy shared by all modules."""


class PlatoonMPCError(Exception):
    """Base class for errors raised by this package."""


class InvalidParameterError(PlatoonMPCError, ValueError):
    """A parameter or input array violates its documented contract."""


class NumericalError(PlatoonMPCError, ArithmeticError):
    """An iterative numerical routine diverged or failed to converge."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InfeasibleError(PlatoonMPCError):
    """A constrained optimization problem has no feasible point."""


class ScenarioError(PlatoonMPCError, ValueError):
    """A scenario definition is malformed or inconsistent."""
