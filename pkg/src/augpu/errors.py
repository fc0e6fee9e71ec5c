"""Exception hierarchy shared by every module."""


class AugPUError(Exception):
    """Base class for all package errors."""


class ContractViolation(AugPUError, ValueError):
    """An input broke a documented precondition (shape, range)."""


class DomainError(AugPUError, ValueError):
    """A probability argument lies outside the region where the formula is defined."""


class CalibrationError(AugPUError, RuntimeError):
    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class LabelingError(AugPUError, RuntimeError):
    pass


class DegenerateStratumError(AugPUError, ValueError):
    """A stratum needed by an estimator or metric is empty or single-class."""


class DegenerateFitError(AugPUError, ValueError):
    pass


class MonotonicityViolation(AugPUError, RuntimeError):
    """EM objective decreased; this indicates a bug, not bad data."""


class ConfigError(AugPUError, ValueError):
    """Configuration file could not be parsed or failed validation."""

    def __init__(self, message, field=None, line=None):
        loc = []
        if field is not None:
            loc.append(f"field '{field}'")
        if line is not None:
            loc.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.field = field
        self.line = line
