"""Exception types shared across the package."""


class LimfbError(Exception):
    """Base class for all package errors."""


class DomainError(LimfbError, ValueError):
    """Argument outside the domain of a special function or formula."""


class NonConvergenceError(LimfbError, ArithmeticError):
    """Series, quadrature or iteration failed to reach its tolerance."""


class DerivativeInstabilityError(NonConvergenceError):
    """Richardson extrapolation did not settle."""


class BracketError(LimfbError, ValueError):
    """Root-finding bracket does not straddle the target."""


class ConfigError(LimfbError, ValueError):
    """Invalid experiment configuration. ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message
