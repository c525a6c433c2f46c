"""Exception types shared across the package."""


class CapabilityError(RuntimeError):
    """Requested operation is outside what this implementation supports."""


class NumericalError(ArithmeticError):
    """A loss or gradient became non-finite during optimization."""
