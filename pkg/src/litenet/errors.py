"""Exception hierarchy shared by every stage of the pipeline."""


class LitenetError(Exception):
    """Base class. ``exit_code`` is the CLI status used when it escapes."""

    exit_code = 2


class SizeError(LitenetError, ValueError):
    """Input too short, empty, or with mismatched dimensions."""


class DataError(LitenetError, ValueError):
    """Malformed or non-finite input values."""


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OrderingError(ParseError):
    """Timestamps not strictly increasing."""


class DegenerateDataError(LitenetError, ArithmeticError):
    """Quantity undefined for the data (zero variance, too few distinct points)."""

    exit_code = 3


class DegenerateModelError(LitenetError):
    """An operation would leave a model unusable, e.g. a fully pruned kernel."""

    exit_code = 3


class ConfigError(LitenetError, ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")
