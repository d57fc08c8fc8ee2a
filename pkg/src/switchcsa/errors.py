"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """Raised when an input violates a documented precondition."""


class NumericalFailure(ArithmeticError):
    """Raised when a regression or fixed-point step cannot produce a usable answer."""


class ConfigError(InvalidArgument):
    """Raised for malformed or inconsistent run configuration."""


class ReportWriteError(OSError):
    """Raised when reports cannot be written; the rendered files stay in ``buffers``."""

    def __init__(self, message: str, buffers: dict[str, str]):
        super().__init__(message)
        self.buffers = buffers
