"""Exception types raised across the package."""


class LDPFusionError(Exception):
    """Base class for all package errors."""


class InvalidInput(LDPFusionError, ValueError):
    """An argument violates a shape, symmetry, or definiteness requirement."""


class SingularMatrix(LDPFusionError, ArithmeticError):
    """A matrix that must be inverted is singular or too ill-conditioned.

    Attributes:
        condition: Estimated 2-norm condition number (``inf`` if exactly singular).
    """

    def __init__(self, message, condition=float("inf")):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


class ConvergenceFailure(LDPFusionError, RuntimeError):
    """A fixed-point iteration did not converge within its iteration cap.

    Attributes:
        residual: Max-entry change at the last iteration.
        iterations: Number of iterations performed.
    """

    def __init__(self, message, residual, iterations):
        super().__init__(f"{message}: residual {residual:.3e} after {iterations} iterations")
        self.residual = residual
        self.iterations = iterations


class BudgetOutOfRange(LDPFusionError, ValueError):
    """A privacy budget lies outside the range a mechanism supports."""
