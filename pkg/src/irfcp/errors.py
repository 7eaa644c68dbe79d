"""Exception types raised across the package."""


class IrfcpError(Exception):
    """Base class for all package errors."""


class ArgumentError(IrfcpError, ValueError):
    """An argument is outside its documented domain."""


class DegenerateUpdateError(IrfcpError, ArithmeticError):
    """Bayes update with a prior whose support misses the likelihood support."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.step = step


class DegenerateObservationError(IrfcpError, ArithmeticError):
    """An observation produced a non-finite log likelihood ratio."""


class BoundUndefinedError(IrfcpError, ArithmeticError):
    """The convergence envelope is undefined for the given start point."""


class UnsupportedTopologyError(IrfcpError):
    """Message passing was asked to run on a graph with a cycle."""


class EnumerationBudgetError(IrfcpError, MemoryError):
    """Brute-force enumeration would exceed the configured budget."""


class ExactConvergence(IrfcpError):
    """A distance sequence hit exactly zero, so no log-slope exists.

    ``step`` is the first index at which the distance was zero.
    """

    def __init__(self, step):
        super().__init__(f"exact convergence at step {step}")
        self.step = step


class ConfigError(IrfcpError, ValueError):
    """Invalid experiment or network configuration."""
