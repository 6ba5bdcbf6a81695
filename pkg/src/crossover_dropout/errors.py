"""Exception types shared across the package.

ValidationError maps to CLI exit code 2, every other package error to exit
code 1 (see cli module).
"""


class CrossoverError(Exception):
    """Base class for all package errors."""


class ValidationError(CrossoverError, ValueError):
    """Malformed user input: bad probability vector, design file, labels."""


class BudgetExceededError(CrossoverError, RuntimeError):
    """An enumeration grew past its configured budget."""


class SingularCovarianceError(CrossoverError, RuntimeError):
    """A covariance submatrix required to be invertible is singular."""


class InfeasibleWeightsError(CrossoverError, RuntimeError):
    """No nonnegative block weights can satisfy the balance equations."""
