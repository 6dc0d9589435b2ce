"""Exception hierarchy shared by all modules."""


class XbarError(Exception):
    """Base class for simulator errors."""


class DomainError(XbarError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class UsageError(XbarError, ValueError):
    """The caller violated an operation's preconditions."""


class ShapeError(XbarError, ValueError):
    pass


class ConfigError(XbarError, ValueError):
    """Invalid configuration; ``field`` names the offending entry when known."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class CalibrationError(XbarError):
    """A calibration had no signal to fit (all-zero observations)."""


class MappingError(XbarError):
    """Patching a network layer failed; ``layer_index`` points at the layer."""

    def __init__(self, message, layer_index=None):
        super().__init__(message)
        self.layer_index = layer_index


class TrainingError(XbarError):
    pass
