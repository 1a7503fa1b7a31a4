"""Exception types raised by the simulator."""


class SimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(SimError, ValueError):
    """Invalid configuration or dimension mismatch.

    ``field`` names the offending configuration key when there is one.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class DataError(SimError, ValueError):
    """Malformed training data (e.g. a label outside the class range)."""


class FormatError(DataError):
    """A dataset file does not follow its declared on-disk format."""


class ProtocolError(SimError, RuntimeError):
    """A federated protocol step was invoked in an invalid state."""


class NumericError(SimError, FloatingPointError):
    """A non-finite value appeared in parameters or gradients."""
