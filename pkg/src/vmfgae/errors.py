class ValidationError(ValueError):
    """Input data or configuration violates a documented invariant."""


class ShapeError(ValidationError):
    pass


class NumericalError(ArithmeticError):
    """A computation produced a non-finite value or failed to converge."""
