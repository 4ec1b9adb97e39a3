"""Exception types shared across the package.

Exit-code mapping used by the CLI: numerical check failure -> 1,
configuration error -> 2, convergence failure -> 3.
"""


class StableKernError(Exception):
    """Base class for package errors."""


class ConfigurationError(StableKernError):
    """Bad configuration: unknown keys, unresolved grids, mismatched nodes."""

    exit_code = 2


class DomainError(StableKernError, ValueError):
    """Arguments outside an operation's stated domain."""

    exit_code = 2


class NumericalCheckFailure(StableKernError):
    """A verification produced values outside the declared tolerance."""

    exit_code = 1


class ConvergenceFailure(StableKernError):
    """An iterative construction did not contract within its budget."""

    exit_code = 3


class QuadratureBudgetError(StableKernError):
    """Quadrature could not meet the requested error budget."""

    exit_code = 1

    def __init__(self, message: str, achieved: float, budget: float):
        super().__init__(f"{message} (achieved {achieved:.3e}, budget {budget:.3e})")
        self.achieved = achieved
        self.budget = budget
