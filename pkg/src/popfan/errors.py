"""Exception hierarchy.

Every error carries the CLI exit code it maps to and the module that raised
it, so the command line can report ``[module] message`` and exit cleanly.
"""


class PopfanError(Exception):
    exit_code = 1
    module = "popfan"

    def __init__(self, message: str, module: str | None = None):
        super().__init__(message)
        if module is not None:
            self.module = module

    def tagged(self) -> str:
        return f"[{self.module}] {self}"


class ConfigError(PopfanError):
    exit_code = 2
    module = "config"


class DataError(PopfanError):
    exit_code = 3
    module = "data"


class ArgumentError(DataError, ValueError):
    """Bad argument value or shape."""


class InsufficientDataError(DataError):
    """Series too short for the requested operation."""


class DegenerateSeriesError(DataError):
    """Zero-variance series or non-positive forecast mean."""


class AlignmentError(DataError):
    """Years or horizons of two inputs do not line up."""


class NumericalError(PopfanError):
    exit_code = 4
    module = "arima"


class SearchFailureError(NumericalError):
    """No candidate order could be fitted."""


class FileIOError(PopfanError):
    exit_code = 5
    module = "io"
