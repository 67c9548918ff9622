"""Exception types shared across the package.

Parameter/domain violations raise plain ``ValueError`` so they surface as
configuration errors; the classes below mark failures of the numerics
themselves (solver non-convergence, loss of definiteness, poles).
"""


class NumericError(RuntimeError):
    """A numerical computation failed (as opposed to bad input)."""


class DefinitenessError(NumericError):
    """A matrix that must be (strictly) positive definite is not."""


class ConvergenceError(NumericError):
    """An iterative solver did not reach its residual target."""


class PoleError(NumericError):
    """A deterministic-equivalent formula was evaluated at its pole."""
