"""Exception types shared across the package."""


class RhoestError(Exception):
    """Base class for all package errors."""


class InputError(RhoestError, ValueError):
    """Invalid argument: domain, shape, or type violation."""


class DegenerateInputError(InputError):
    """Input is structurally valid but degenerate (e.g. identically zero)."""


class BudgetError(RhoestError):
    """A configured size or enumeration budget was exceeded."""


class ShapeViolationError(RhoestError):
    """A density or function violates its declared shape constraint."""


class QuadratureError(RhoestError):
    """Numerical integration failed to reach the requested tolerance."""
