"""Error types shared across the package."""


class ConfigurationError(ValueError):
    """Raised when a descriptor id, field, or parameter combination is invalid."""


class NumericError(ArithmeticError):
    """Raised when a computation produces non-finite values or fails to converge."""


class LatticeRefusal(RuntimeError):
    """Raised when a requested computation cannot be done on the given lattice.

    Carries a human-readable suggestion (e.g. a required box or time step) in
    ``suggestion``.
    """

    def __init__(self, message: str, suggestion: str | None = None):
        super().__init__(message if suggestion is None else f"{message} ({suggestion})")
        self.suggestion = suggestion
