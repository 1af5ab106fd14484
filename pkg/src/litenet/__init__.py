"""Low-latency market prediction: dynamic feature selection feeding a pruned
multi-scale convolutional predictor."""

from .errors import (
    ConfigError,
    DataError,
    DegenerateDataError,
    DegenerateModelError,
    LitenetError,
    OrderingError,
    ParseError,
    SizeError,
)

__version__ = "0.1.0"
