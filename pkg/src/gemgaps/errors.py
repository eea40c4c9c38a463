"""Exception types shared across the package.

The command line maps these onto exit codes: validation problems exit 1,
numerical/convergence problems exit 2, and a failed verification decision
exits 3 (the last one is signalled by the report, not by an exception).
"""


class ValidationError(ValueError):
    """A parameter is outside its documented domain."""


class ConvergenceError(ArithmeticError):
    """An iterative numerical routine failed to reach its tolerance."""


class ResourceCapError(RuntimeError):
    """A configured hard cap (bar budget, stopping-time cap) was exceeded."""


class DegenerateDataError(ValueError):
    """A statistical test received data it cannot form a decision from."""
