"""Exception types shared across the package."""


class GazeConvError(Exception):
    """Base class for all package errors."""


class ShapeError(GazeConvError, ValueError):
    pass


class LengthError(GazeConvError, ValueError):
    pass


class LabelError(GazeConvError, ValueError):
    pass


class ConfigurationError(GazeConvError, ValueError):
    pass


class DataFormatError(GazeConvError, ValueError):
    """Raised for malformed input files. Carries the offending row when known."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class DataError(GazeConvError, ValueError):
    pass


class NumericalError(GazeConvError, FloatingPointError):
    """A loss or activation became NaN/Inf during training."""
