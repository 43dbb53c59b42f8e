"""Exception types shared across the package."""


class UsageError(ValueError):
    """Invalid arguments or inconsistent inputs supplied by the caller."""


class NumericalError(ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class DegenerateAxisError(NumericalError):
    """All trainable coordinates of an axis collapsed onto one value."""
