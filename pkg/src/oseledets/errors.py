"""Exception hierarchy shared by the numerical modules."""

from __future__ import annotations


class OseledetsError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(OseledetsError, ValueError):
    """Input coordinates are not finite or lie outside the map's domain."""


class ParameterError(OseledetsError, ValueError):
    """A numerical parameter is outside its admissible range."""


class SingularStepError(OseledetsError, ArithmeticError):
    """A tangent step hit an exactly singular slope with the guard disabled."""


class DivergenceError(OseledetsError, ArithmeticError):
    """An orbit on the plane escaped to non-finite coordinates."""


class EmptyAccumulatorError(OseledetsError, ValueError):
    """An exponent was requested from an accumulator holding no steps."""


class HorizontalTangentError(OseledetsError, ArithmeticError):
    """A tangent direction is horizontal, so its sine vanishes."""


class NoConvergenceError(OseledetsError, ArithmeticError):
    """Vector iteration failed to single out a covariant direction."""
